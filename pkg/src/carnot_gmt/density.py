"""Blow-up analysis: density profiles, rescaled surfaces, metric factors and
the global constants attached to a homogeneous norm."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from . import algebra as ca
from . import homnorm as hn
from . import quadrature as qd
from .algebra import StratifiedAlgebra
from .catalog import graph_surface
from .errors import OutOfAtlasError
from .homnorm import HomogeneousNorm
from .quadrature import QuadratureConfig, QuadratureEstimate
from .surface import Chart, CurveChart, Hypersurface, PointOrder, SmoothFunction, chart_geometry, grid_points

LOCATE_TOL = 1e-8
DEFAULT_LEVELS = 7
FACE_SAMPLES = 33
SCAN_SAMPLES = 65


# ----------------------------------------------------------- ball regions


def locate(S: Hypersurface, x) -> tuple[int, np.ndarray]:
    """Chart index and parameter of the surface point ``x``.

    The first chart whose least-squares preimage hits ``x`` wins.
    """
    x = np.asarray(x, float)
    best = None
    for ci, ch in enumerate(S.charts):
        U = grid_points(ch.lo, ch.hi, 21 if ch.dim <= 2 else 9)
        u0 = U[np.argmin(np.linalg.norm(ch.point(U) - x, axis=-1))]
        res = least_squares(lambda u: ch.point(u) - x, u0, bounds=(ch.lo, ch.hi), xtol=1e-15, ftol=1e-15, gtol=1e-15)
        miss = float(np.linalg.norm(ch.point(res.x) - x))
        if miss <= LOCATE_TOL * (1.0 + np.linalg.norm(x)):
            return ci, res.x
        if best is None or miss < best:
            best = miss
    raise OutOfAtlasError(f"point {x.tolist()} is not in any chart image (closest miss {best:.3g})")


def ball_region(S: Hypersurface, chart: Chart, x, t: float):
    x = np.asarray(x, float)
    return lambda U: hn.distance(S.rho, x, chart.point(U)) < t


def _face_points(lo, hi, axis, side, m):
    pts = grid_points(lo, hi, m) if len(lo) > 1 else np.array([[0.0]])
    if len(lo) == 1:
        return np.array([[hi[0] if side > 0 else lo[0]]])
    pts = pts.reshape((m,) * len(lo) + (len(lo),))
    pts = np.moveaxis(pts, axis, 0)[-1 if side > 0 else 0]
    return pts.reshape(-1, len(lo))


def _grow(pred, center, lo_bound, hi_bound, w0, m_face) -> tuple[np.ndarray, np.ndarray]:
    """Double each face of a box about ``center`` until ``pred`` is false on
    every face sample or the face reaches its bound."""
    d = len(center)
    lo, hi = np.maximum(center - w0, lo_bound), np.minimum(center + w0, hi_bound)
    for _ in range(200):
        grown = False
        for a in range(d):
            for side in (-1, 1):
                at_edge = hi[a] >= hi_bound[a] if side > 0 else lo[a] <= lo_bound[a]
                if at_edge or not pred(_face_points(lo, hi, a, side, m_face)).any():
                    continue
                grown = True
                if side > 0:
                    hi[a] = min(hi_bound[a], center[a] + 2.0 * (hi[a] - center[a]))
                else:
                    lo[a] = max(lo_bound[a], center[a] - 2.0 * (center[a] - lo[a]))
        if not grown:
            break
    return lo, hi


def _scan_hits(inside, dlo, dhi, d, exclude=None):
    m = SCAN_SAMPLES if d <= 2 else 17
    U = grid_points(dlo, dhi, m)
    hit = inside(U)
    if exclude is not None:
        lo, hi = exclude
        hit &= ~np.all((U >= lo) & (U <= hi), axis=-1)
    if not hit.any():
        return None
    cell = (dhi - dlo) / (m - 1)
    return np.maximum(U[hit].min(axis=0) - cell, dlo), np.minimum(U[hit].max(axis=0) + cell, dhi)


def ball_box(S: Hypersurface, chart: Chart, x, t: float, u0=None) -> Optional[tuple[np.ndarray, np.ndarray]]:
    """Parameter box containing the preimage of ``B_rho(x, t)`` in ``chart``.

    From a known preimage ``u0`` the box grows until every face sample lies
    outside the ball; a coarse scan of the whole chart adds components that
    the growth misses.  ``None`` when the ball does not meet the chart.
    """
    inside = ball_region(S, chart, x, t)
    dlo, dhi = np.array(chart.lo, float), np.array(chart.hi, float)
    d = chart.dim
    boxes = []
    if u0 is not None:
        u0 = np.asarray(u0, float)
        boxes.append(_grow(inside, u0, dlo, dhi, 1e-7 * (dhi - dlo), FACE_SAMPLES if d <= 2 else 17))
    extra = _scan_hits(inside, dlo, dhi, d, boxes[0] if boxes else None)
    if extra is not None:
        boxes.append(extra)
    if not boxes:
        return None
    return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)


@dataclass(frozen=True)
class OrientedBox:
    """Chart parameters ``u = origin + v @ R.T`` with ``v`` in ``[lo, hi]``."""

    origin: np.ndarray
    R: np.ndarray
    lo: np.ndarray
    hi: np.ndarray


def oriented_ball_box(S: Hypersurface, chart: Chart, x, t: float, u0) -> Optional[OrientedBox]:
    """Box aligned with the principal axes of the ball preimage about ``u0``.

    Balls around a point away from the origin are sheared in exponential
    coordinates; an axis-aligned box around such a sliver is mostly empty.
    ``None`` when the preimage has pieces away from ``u0``.
    """
    inside = ball_region(S, chart, x, t)
    dlo, dhi = np.array(chart.lo, float), np.array(chart.hi, float)
    d = chart.dim
    u0 = np.asarray(u0, float)
    m_face = FACE_SAMPLES if d <= 2 else 17
    lo, hi = _grow(inside, u0, dlo, dhi, 1e-7 * (dhi - dlo), m_face)
    if _scan_hits(inside, dlo, dhi, d, (lo, hi)) is not None:
        return None
    U = grid_points(lo, hi, SCAN_SAMPLES if d <= 2 else 17)
    P = U[inside(U)]
    if len(P) < d + 2:
        return OrientedBox(u0, np.eye(d), lo - u0, hi - u0)
    _, R = np.linalg.eigh(np.cov((P - u0).T).reshape(d, d))

    def pred(V):
        Uv = u0 + V @ R.T
        return chart.contains(Uv) & inside(Uv)

    D = float(np.linalg.norm(hi - lo))
    size = np.sqrt(np.maximum(np.linalg.eigvalsh(np.cov((P - u0).T).reshape(d, d)), 0.0))
    w0 = np.maximum(1e-7 * D, 1e-3 * size)
    vlo, vhi = _grow(pred, np.zeros(d), -np.full(d, D), np.full(d, D), w0, m_face)
    perm = np.round(R)
    if np.allclose(R, perm, atol=1e-9) and np.allclose(np.abs(perm).sum(axis=0), 1.0):
        # axis-aligned up to order and sign: clip to the chart so its edges
        # are box faces rather than cut cells
        a, b = (dlo - u0) @ perm, (dhi - u0) @ perm
        vlo = np.maximum(vlo, np.minimum(a, b))
        vhi = np.minimum(vhi, np.maximum(a, b))
        R = perm
    return OrientedBox(u0, R, vlo, vhi)


def surface_integral(
    S: Hypersurface,
    integrand,
    ball: Optional[tuple] = None,
    config: QuadratureConfig = qd.DEFAULT,
    boxes: Optional[Sequence] = None,
) -> QuadratureEstimate:
    """``sum_charts int integrand(geometry)`` over ``S`` or ``S ∩ B(x, t)``.

    ``integrand`` receives a :class:`Geometry` batch and returns one value
    per point, e.g. ``lambda g: g.sigma`` for the H-perimeter.
    """
    parts = []
    home = None
    if ball is not None:
        x, t = ball
        try:
            home = locate(S, x)
        except OutOfAtlasError:
            home = None
    for ci, ch in enumerate(S.charts):
        region, box = None, None
        if boxes is not None:
            box = boxes[ci]
        if ball is not None:
            x, t = ball
            u0 = home[1] if home is not None and home[0] == ci else None
            ob = oriented_ball_box(S, ch, x, t, u0) if u0 is not None else None
            if ob is not None:
                inside = ball_region(S, ch, x, t)

                def lift(V, ob=ob):
                    return ob.origin + np.asarray(V, float) @ ob.R.T

                def oregion(V, ch=ch, inside=inside, lift=lift):
                    Uv = lift(V)
                    return ch.contains(Uv) & inside(Uv)

                def ointegrand(V, ch=ch, lift=lift):
                    return integrand(chart_geometry(S, ch, lift(V)))

                parts.append(qd.integrate_box(ointegrand, ob.lo, ob.hi, oregion, config))
                continue
            box = ball_box(S, ch, x, t, u0)
            if box is None:
                continue
            region = ball_region(S, ch, x, t)
        parts.append(qd.integrate_chart(ch, lambda U, ch=ch: integrand(chart_geometry(S, ch, U)), region, config, box))
    return qd.total(parts)


def sigma_H(S: Hypersurface, ball=None, config: QuadratureConfig = qd.DEFAULT) -> QuadratureEstimate:
    return surface_integral(S, lambda g: g.sigma, ball, config)


# --------------------------------------------------------- density profile


@dataclass(frozen=True)
class DensityProfile:
    center: tuple[float, ...]
    radii: tuple[float, ...]
    values: tuple[float, ...]
    errors: tuple[float, ...]
    evaluations: tuple[int, ...]
    kappa_limit: float
    kappa_uncertainty: float
    Q: int

    def rows(self):
        """``(t, m(t), error, cumulative evaluations)`` per radius."""
        return list(zip(self.radii, self.values, self.errors, self.evaluations))


def default_radii(S: Hypersurface, x=None, levels: int = DEFAULT_LEVELS) -> tuple[float, ...]:
    """``s * 2^{-j}``, ``j = 0..levels-1``, with ``s = min(1, half the
    smallest side of the chart holding x)``."""
    ch = S.charts[0]
    if x is not None:
        try:
            ch = S.charts[locate(S, x)[0]]
        except OutOfAtlasError:
            pass
    s = min(1.0, 0.5 * float(np.min(np.array(ch.hi) - np.array(ch.lo))))
    return tuple(s * 0.5**j for j in range(levels))


def richardson_limit(radii, values, errors) -> tuple[float, float]:
    """Limit at ``t = 0`` from the three smallest radii.

    The quadratic interpolant removes the first- and second-order terms in
    ``t``; the uncertainty is its distance to the first-order (two-point)
    estimate plus the propagated quadrature errors.
    """
    t = np.asarray(radii, float)
    v = np.asarray(values, float)
    e = np.asarray(errors, float)
    if len(t) == 1:
        return float(v[0]), float(e[0])
    order = np.argsort(t)[:3]
    t, v, e = t[order], v[order], e[order]
    if len(t) == 2:
        w = np.array([t[1], -t[0]]) / (t[1] - t[0])
        lim = float(w @ v)
        return lim, float(np.abs(w) @ e + abs(lim - v[0]))
    w3 = np.array(
        [np.prod([-t[j] / (t[i] - t[j]) for j in range(3) if j != i]) for i in range(3)]
    )
    lin_w = np.array([t[1], -t[0]]) / (t[1] - t[0])
    quad = float(w3 @ v)
    lin = float(lin_w @ v[:2])
    return quad, float(abs(quad - lin) + np.abs(w3) @ e)


def density_profile(
    S: Hypersurface,
    x,
    radii: Optional[Sequence[float]] = None,
    rho: Optional[HomogeneousNorm] = None,
    config: QuadratureConfig = qd.DEFAULT,
) -> DensityProfile:
    """``m(t) = sigma_H(S ∩ B_rho(x, t)) / t^{Q-1}`` on decreasing radii."""
    if rho is not None and rho is not S.rho:
        S = Hypersurface(S.alg, rho, S.levelset, S.charts, S.boundary, S.name, S.tol_char)
    x = np.asarray(x, float)
    locate(S, x)
    radii = tuple(float(r) for r in (radii if radii is not None else default_radii(S, x)))
    if not radii or any(r <= 0 for r in radii) or any(b >= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be positive and strictly decreasing")
    Q = S.alg.Q

    def one(t):
        return sigma_H(S, (x, t), config)

    ests = qd.parallel_map(one, radii)
    vals = tuple(max(e.value, 0.0) / t ** (Q - 1) for e, t in zip(ests, radii))
    errs = tuple(e.error_estimate / t ** (Q - 1) for e, t in zip(ests, radii))
    cum = tuple(int(v) for v in np.cumsum([e.evaluations for e in ests]))
    lim, unc = richardson_limit(radii, vals, errs)
    return DensityProfile(tuple(x.tolist()), radii, vals, errs, cum, lim, unc, Q)


# ------------------------------------------------------------- blow-ups


def blowup_surface(S: Hypersurface, x, r: float) -> Hypersurface:
    """``delta_{1/r}(x^{-1} * S)``: defining function ``phi(x * delta_r z)``."""
    if r <= 0:
        raise ValueError("blow-up scale must be positive")
    alg, rho = S.alg, S.rho
    x = np.asarray(x, float)
    xi = ca.inverse(alg, x)
    scale = float(r) ** alg.ord.astype(float)

    def back(z):
        return ca.bch_product(alg, x, np.asarray(z, float) * scale)

    def fwd(y):
        return ca.bch_product(alg, xi, np.asarray(y, float)) / scale

    def push(y):
        """Differential of ``fwd`` at ``y`` as an ``(..., n, n)`` matrix."""
        return ca.left_translation_jacobian(alg, np.broadcast_to(xi, np.shape(y)), y) / scale[:, None]

    def f(z):
        return S.levelset.value(back(z))

    def grad(z):
        z = np.asarray(z, float)
        J = ca.left_translation_jacobian(alg, np.broadcast_to(x, z.shape), z * scale) * scale
        return np.einsum("...ab,...a->...b", J, S.levelset.gradient(back(z)))

    def chart_map(ch: Chart) -> Chart:
        def F(u):
            return fwd(ch.point(u))

        def jac(u):
            return push(ch.point(u)) @ ch.tangents(u)

        return Chart(ch.lo, ch.hi, F, jac, f"{ch.label}@r={r:g}")

    def curve_map(c: CurveChart) -> CurveChart:
        def pushed_outward(v, c=c):
            return np.einsum("...ab,...b->...a", push(c.point(v)), c.outward(v))

        outward = pushed_outward if c.outward is not None else None

        return CurveChart(
            c.lo,
            c.hi,
            lambda v, c=c: fwd(c.point(v)),
            lambda v, c=c: push(c.point(v)) @ c.tangents(v),
            c.orientation,
            outward,
            c.label,
        )

    return Hypersurface(
        alg,
        rho,
        SmoothFunction(f, grad, None),
        tuple(chart_map(ch) for ch in S.charts),
        tuple(curve_map(c) for c in S.boundary),
        f"blowup({S.name}, r={r:g})",
        S.tol_char,
    )


# ---------------------------------------------------------- metric factors


def _auto_config(d: int, config: Optional[QuadratureConfig]) -> QuadratureConfig:
    """Adaptive rules up to two parameters; seeded Monte Carlo beyond."""
    if config is not None:
        return config
    return qd.DEFAULT if d <= 2 else QuadratureConfig(method="mc")


def metric_factor_noncharacteristic(
    alg: StratifiedAlgebra, rho: HomogeneousNorm, direction, config: Optional[QuadratureConfig] = None
) -> QuadratureEstimate:
    """``kappa(nu_H) = sigma_H(I(nu_H) ∩ B(0, 1))``.

    On a vertical hyperplane ``|P_H nu| = 1`` and the frame has unit
    determinant, so the H-perimeter is the Euclidean ``(n-1)``-measure.
    """
    return qd.integrate_vertical_hyperplane(alg, rho, direction, _auto_config(alg.n - 1, config))


def limit_surface(alg: StratifiedAlgebra, rho: HomogeneousNorm, po: PointOrder) -> Hypersurface:
    """Graph ``{z_alpha = psi~(z)}`` over the box ``|z_j| <= r_2^ord(j)``."""
    _, r2 = rho.radii
    keep = [j for j in range(alg.n) if j != po.alpha]
    dom = [(-(r2 ** float(alg.ord[j])), r2 ** float(alg.ord[j])) for j in keep]
    return graph_surface(alg, rho, po.alpha, po.psi_tilde, dom, False, "limit-graph")


def metric_factor_characteristic(
    alg: StratifiedAlgebra, rho: HomogeneousNorm, po: PointOrder, config: Optional[QuadratureConfig] = None
) -> QuadratureEstimate:
    """``sigma_H(S_inf ∩ B(0, 1))`` for the limit graph of ``point_order``;
    zero for the empty blow-up."""
    if po.empty:
        return QuadratureEstimate(0.0, 0.0, 0, "empty-blowup")
    S = limit_surface(alg, rho, po)
    ch = S.charts[0]
    region = lambda U: rho(ch.point(U)) < 1.0
    cfg = _auto_config(alg.n - 1, config)
    return qd.integrate_chart(ch, lambda U: chart_geometry(S, ch, U).sigma, region, cfg)


def radial_plane_factor(n: int) -> float:
    """``O_{2n-1} / (2 (2n + 1))``: ``sigma_H({t = 0} ∩ B(0, 1))`` in ``H^n``
    with the Korányi norm, where ``O_{2n-1}`` is the area of the unit
    sphere in ``R^{2n}``."""
    area = 2.0 * math.pi**n / math.gamma(n)
    return area / (2.0 * (2 * n + 1))


def plane_factor_reference_readings(n: int) -> dict:
    """The closed form ``O_{2n} / 4n`` under the two common readings of
    ``O_m``: area of the sphere in ``R^m`` or of ``S^m``."""
    def sphere_area(dim_ambient):
        return 2.0 * math.pi ** (dim_ambient / 2) / math.gamma(dim_ambient / 2)

    return {
        "O_m = |S^{m-1}|": sphere_area(2 * n) / (4 * n),
        "O_m = |S^m|": sphere_area(2 * n + 1) / (4 * n),
    }


def metric_factor_bounds(alg: StratifiedAlgebra, rho: HomogeneousNorm) -> tuple[float, float]:
    """``K_1 = (2 r_1)^{Q-1}`` and ``K_2 = sqrt(n-1) (2 r_2)^{Q-1}``."""
    r1, r2 = rho.radii
    Q, n = alg.Q, alg.n
    return (2 * r1) ** (Q - 1), math.sqrt(n - 1) * (2 * r2) ** (Q - 1)


def box_section_bound(alg: StratifiedAlgebra, rho: HomogeneousNorm) -> float:
    """Measure of a vertical central section of ``Box(0, r_1)``.

    ``Box(0, r_1)`` lies in the unit ball and a hyperplane through the
    center of a box cuts it in at least the product of the remaining side
    lengths, giving ``2^{n-1} r_1^{Q-1}``.
    """
    r1, _ = rho.radii
    return 2.0 ** (alg.n - 1) * r1 ** (alg.Q - 1)


def random_directions(h: int, m: int, seed: int = 0) -> np.ndarray:
    v = np.random.default_rng(seed).standard_normal((m, h))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


# -------------------------------------------------------- constants bundle


@dataclass(frozen=True)
class ConstantsBundle:
    K1: float
    K2: float
    K1_box: float
    b1: float
    b_rho: float
    d_rho: float
    C_dim: float
    c: tuple[float, ...]
    c_certified: tuple[float, ...]
    radii: tuple[float, float]
    directions: int
    seed: int
    notes: tuple[str, ...] = field(default=())

    def as_dict(self) -> dict:
        return {
            "K1": self.K1,
            "K2": self.K2,
            "K1_box": self.K1_box,
            "b1": self.b1,
            "b_rho": self.b_rho,
            "d_rho": self.d_rho,
            "C_dim": self.C_dim,
            "c": list(self.c),
            "c_certified": list(self.c_certified),
            "r1": self.radii[0],
            "r2": self.radii[1],
        }


def constants_bundle(
    alg: StratifiedAlgebra,
    rho: HomogeneousNorm,
    S: Optional[Hypersurface] = None,
    directions: int = 16,
    seed: int = 0,
    config: Optional[QuadratureConfig] = None,
    encountered: Sequence[PointOrder] = (),
) -> ConstantsBundle:
    """``K_1, K_2, b_rho, d_rho, C_dim`` with the layer constants they use.

    ``b_1`` maximizes the hyperplane measure over the coordinate axes and
    ``directions`` seeded random horizontal directions.  The supremum over
    all polynomial limit graphs is not computed; limit graphs listed in
    ``encountered`` give a labelled lower estimate of it.
    """
    K1, K2 = metric_factor_bounds(alg, rho)
    c = tuple(rho.constants.sup)
    dirs = np.vstack([np.eye(alg.h), random_directions(alg.h, directions, seed)])
    vals = [metric_factor_noncharacteristic(alg, rho, v, config).value for v in dirs]
    b1 = max(vals)
    notes = ["b_2 (supremum over polynomial limit graphs) not computed; b_rho = b_1"]
    if encountered:
        b2_lower = 0.0
        for po in encountered:
            if po.empty:
                continue
            S_inf = limit_surface(alg, rho, po)
            ch = S_inf.charts[0]
            est = qd.integrate_chart(
                ch,
                lambda U: chart_geometry(S_inf, ch, U).area,
                lambda U: rho(ch.point(U)) < 1.0,
                _auto_config(alg.n - 1, config),
            )
            b2_lower = max(b2_lower, est.value)
        notes.append(f"lower estimate of b_2 over encountered limit graphs: {b2_lower:.10g}")
    b_rho = b1
    d_rho = sum(i * c[i - 2] * alg.layer_dims[i - 1] for i in range(2, alg.k + 1)) * b_rho
    C_dim = 2.0 * sum(c)
    K1_box = box_section_bound(alg, rho)
    if min(vals) < K1:
        notes.append(f"sampled metric factor {min(vals):.6g} below K1 = {K1:.6g}; box-section bound {K1_box:.6g}")
    if S is not None:
        notes.append(f"surface {S.name} supplied; constants depend only on the group and norm")
    return ConstantsBundle(
        K1, K2, K1_box, b1, b_rho, d_rho, C_dim, c, tuple(rho.constants.certified), rho.radii,
        directions, seed, tuple(notes),
    )
