"""Numerical evaluation of both sides of the coarea and divergence identities,
the A/B boundary terms, and the monotonicity, isoperimetric, asymptotic and
Sobolev inequalities on hypersurfaces."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from skimage import measure

from . import algebra as ca
from . import density as dn
from . import homnorm as hn
from . import quadrature as qd
from . import surface as sf
from .errors import CharacteristicPointError, SupportError, UnsupportedDimensionError
from .quadrature import QuadratureConfig, QuadratureEstimate
from .surface import Chart, Hypersurface, SmoothFunction, chart_geometry

IDENTITY_RTOL = 1e-3
H0_INFLATION = 1.05
LEVEL_GRID = 257
LEVEL_INTERVALS = 16
MIN_CURVE_LENGTH = 1e-8
SARD_TOL = 1e-8
CHAR_FRACTION_TOL = 1e-3
SUPPORT_TOL = 1e-10
SUPPORT_BAND = 0.02
MU_HYPOTHESIS_FLAG = "hypothesis: mu-ratio limit at characteristic points unverified"


# ---------------------------------------------------------------- reports


def verdict(margin: float, error: float) -> str:
    """``holds`` if ``margin > error``, ``violated`` if ``margin < -error``."""
    if margin > error:
        return "holds"
    if margin < -error:
        return "violated"
    return "inconclusive"


def identity_verdict(lhs: float, rhs: float, error: float, rtol: float = IDENTITY_RTOL) -> str:
    """An identity holds when the sides agree within the combined error or
    the relative tolerance ``rtol``."""
    scale = max(abs(lhs), abs(rhs))
    return "holds" if abs(rhs - lhs) <= max(error, rtol * scale) else "violated"


def relative_residual(lhs: float, rhs: float) -> float:
    scale = max(abs(lhs), abs(rhs))
    return 0.0 if scale == 0 else abs(lhs - rhs) / scale


@dataclass
class InequalityReport:
    """Both sides of a check with ``margin = rhs - lhs``.

    ``kind`` is ``inequality`` (``lhs <= rhs``), ``identity``, or ``probe``
    (a recorded finding without a verdict of its own).
    """

    name: str
    lhs: float
    rhs: float
    error: float
    kind: str = "inequality"
    verdict: str = ""
    constants: dict = field(default_factory=dict)
    terms: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    flags: tuple = ()
    notes: tuple = ()

    def __post_init__(self):
        if not self.verdict:
            if self.kind == "identity":
                self.verdict = identity_verdict(self.lhs, self.rhs, self.error)
            else:
                self.verdict = verdict(self.margin, self.error)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def residual(self) -> float:
        return relative_residual(self.lhs, self.rhs)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "error": self.error,
            "residual": self.residual,
            "verdict": self.verdict,
            "constants": dict(self.constants),
            "terms": dict(self.terms),
            "errors": dict(self.errors),
            "rows": list(self.rows),
            "flags": list(self.flags),
            "notes": list(self.notes),
        }


def combine_verdicts(verdicts: Sequence[str]) -> str:
    if "violated" in verdicts:
        return "violated"
    if "inconclusive" in verdicts or not verdicts:
        return "inconclusive"
    return "holds"


# ------------------------------------------------------------ test functions


def radial_bump(scale: float = 1.0) -> SmoothFunction:
    """``scale * max(0, 1 - |x|^2)^2`` in exponential coordinates."""

    def f(x):
        return scale * np.maximum(0.0, 1.0 - np.sum(x * x, axis=-1)) ** 2

    def grad(x):
        return (-4.0 * scale * np.maximum(0.0, 1.0 - np.sum(x * x, axis=-1)))[..., None] * x

    return SmoothFunction(f, grad)


def zero_function() -> SmoothFunction:
    return SmoothFunction(lambda x: np.zeros(x.shape[:-1]), lambda x: np.zeros_like(x))


def coordinate_function(n: int, index: int) -> SmoothFunction:
    e = np.zeros(n)
    e[index] = 1.0
    return SmoothFunction(lambda x: x[..., index], lambda x: np.broadcast_to(e, x.shape).copy())


TEST_FUNCTIONS = {
    "radial_bump": radial_bump,
    "zero": lambda scale=1.0: zero_function(),
}


# --------------------------------------------------------- shared pieces


def _norm_safe_gradient(rho, x, y) -> np.ndarray:
    """Frame gradient of ``rho_x`` at ``y``; NaN rows at ``y = x``."""
    z = ca.bch_product(rho.alg, ca.inverse(rho.alg, np.broadcast_to(x, y.shape)), y)
    bad = rho(z) == 0
    z = np.where(bad[..., None], 1.0, z)
    g = rho.frame_gradient(z)
    return np.where(bad[..., None], np.nan, g)


def sample_H0(S: Hypersurface, ball=None, m: int = 65) -> float:
    """``1.05 * max |H_H|`` over a chart grid, restricted to ``ball``."""
    worst = 0.0
    for ch in S.charts:
        U = sf.grid_points(ch.lo, ch.hi, m if ch.dim <= 2 else 17)
        X = ch.point(U)
        if ball is not None:
            keep = hn.distance(S.rho, np.asarray(ball[0], float), X) < ball[1]
            X = X[keep]
        if len(X):
            H = sf.mean_curvature_at(S, X)
            if np.isfinite(H).any():
                worst = max(worst, float(np.nanmax(np.abs(H))))
    return H0_INFLATION * worst


def _isop_constant(alg, rho) -> tuple[float, float]:
    K1, _ = dn.metric_factor_bounds(alg, rho)
    Q = alg.Q
    return 2.0 * 2.0**Q / K1 ** (1.0 / (Q - 1)), K1


def _require_planar(ch: Chart, what: str) -> None:
    if ch.dim != 2:
        raise UnsupportedDimensionError(f"{what} needs two-dimensional charts (n = 3)")


def level_curves(values: np.ndarray, lo, hi, level: float) -> list[np.ndarray]:
    """Polylines of ``values == level`` on a chart grid, in chart coordinates.

    Curves shorter than ``1e-8`` are dropped.
    """
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    m = np.array(values.shape, float)
    step = (hi - lo) / (m - 1)
    out = []
    for c in measure.find_contours(values, level):
        line = lo + c * step
        if len(line) > 1 and np.sum(np.linalg.norm(np.diff(line, axis=0), axis=1)) > MIN_CURVE_LENGTH:
            out.append(line)
    return out


def _grid(ch: Chart, lo, hi, m: int) -> np.ndarray:
    axes = [np.linspace(a, b, m) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)


def _curve_density(S: Hypersurface, ch: Chart, weight: Callable):
    """Line density for chart polylines: ``weight(x, bg) * tangents``."""

    def dens(U, dU):
        T = np.einsum("...ad,...d->...a", ch.tangents(U), dU)[..., None]
        x = ch.point(U)
        bg = sf.boundary_geometry(S, x, T)
        return weight(x, bg)

    return dens


def _gauss_levels(a: float, b: float, intervals: int, order: int):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, intervals + 1)
    s, w = [], []
    for l, r in zip(edges[:-1], edges[1:]):
        s.extend(0.5 * (l + r) + 0.5 * (r - l) * nodes)
        w.extend(0.5 * (r - l) * weights)
    return np.array(s), np.array(w)


# ----------------------------------------------------------------- coarea


def coarea_check(
    S: Hypersurface,
    phi: SmoothFunction,
    psi: Optional[SmoothFunction] = None,
    intervals: int = LEVEL_INTERVALS,
    grid: int = LEVEL_GRID,
    config: QuadratureConfig = qd.DEFAULT,
) -> InequalityReport:
    """``int psi |grad_HS phi| sigma_H = int ds int_{phi = s} psi sigma_H^{n-2}``.

    The level integral uses composite three-point Gauss rules in ``s``; the
    two-point rule on the same intervals gives its error estimate.  Levels
    where the in-surface gradient of ``phi`` vanishes on the curve are
    skipped and listed.
    """
    psi = psi or SmoothFunction(lambda x: np.ones(x.shape[:-1]))

    def lhs_integrand(g):
        gHS = sf.grad_HS_at(S, g.x, phi, g.normal)
        return psi.value(g.x) * np.linalg.norm(gHS, axis=-1) * g.sigma

    lhs = dn.surface_integral(S, lhs_integrand, config=config)
    rhs_val, rhs_alt, line_err, skipped = 0.0, 0.0, 0.0, []
    failures = []
    for ch in S.charts:
        _require_planar(ch, "coarea_check")
        G = _grid(ch, ch.lo, ch.hi, grid)
        vals = phi.value(ch.point(G))
        smin, smax = float(vals.min()), float(vals.max())
        if smax - smin <= 0:
            continue
        weight = lambda x, bg: psi.value(x) * bg.density
        dens = _curve_density(S, ch, weight)

        def level_integral(s):
            try:
                curves = level_curves(vals, ch.lo, ch.hi, s)
            except (ValueError, RuntimeError) as exc:
                failures.append(f"level {s:.6g}: {exc}")
                return None
            if not curves:
                return qd.QuadratureEstimate(0.0, 0.0, 0, "polyline-gauss")
            pts = np.vstack(curves)
            gtan = np.einsum("...a,...ad->...d", phi.gradient(ch.point(pts)), ch.tangents(pts))
            if np.min(np.linalg.norm(gtan, axis=-1)) < SARD_TOL:
                skipped.append(float(s))
                return None
            return qd.integrate_polylines(curves, dens)

        for order, acc in ((3, "main"), (2, "alt")):
            s_nodes, s_w = _gauss_levels(smin, smax, intervals, order)
            total = 0.0
            for s, w in zip(s_nodes, s_w):
                est = level_integral(s)
                if est is None:
                    continue
                total += w * est.value
                if acc == "main":
                    line_err += w * est.error_estimate
            if acc == "main":
                rhs_val += total
            else:
                rhs_alt += total
    error = lhs.error_estimate + abs(rhs_val - rhs_alt) + line_err
    notes = []
    if skipped:
        notes.append(f"skipped {len(skipped)} critical levels")
    if failures:
        notes.append("level extraction failed: " + "; ".join(failures[:5]))
    report = InequalityReport(
        "coarea",
        lhs.value,
        rhs_val,
        error,
        kind="identity",
        terms={"lhs": lhs.value, "rhs": rhs_val},
        errors={"lhs": lhs.error_estimate, "rhs_levels": abs(rhs_val - rhs_alt), "rhs_curves": line_err},
        notes=tuple(notes),
    )
    if failures:
        report.verdict = "inconclusive"
    return report


# ------------------------------------------------------------- divergence


def _sub_surface(S: Hypersurface, lo, hi, chart: int = 0) -> Hypersurface:
    base = S.charts[chart]
    lo = np.maximum(np.asarray(lo, float), base.lo)
    hi = np.minimum(np.asarray(hi, float), base.hi)
    ch = Chart(tuple(lo), tuple(hi), base.F, base.jac, f"{base.label}[sub]")
    return Hypersurface(S.alg, S.rho, S.levelset, (ch,), sf.box_faces(ch), S.name, S.tol_char)


def divergence_check(
    S: Hypersurface,
    X: sf.HorizontalField,
    lo=None,
    hi=None,
    chart: int = 0,
    config: QuadratureConfig = qd.DEFAULT,
) -> InequalityReport:
    """``int_U (div_HS X + <C_H nu_H, X>) sigma_H
    = -int_U H_H <X, nu_H> sigma_H + int_{dU} <X, eta_HS> sigma_H^{n-2}``
    on the chart rectangle ``U = [lo, hi]``."""
    base = S.charts[chart]
    U = _sub_surface(S, base.lo if lo is None else lo, base.hi if hi is None else hi, chart)
    ch = U.charts[0]
    probe = chart_geometry(S, ch, sf.grid_points(ch.lo, ch.hi, 33 if ch.dim <= 2 else 9))
    frac = float(np.mean(probe.normal.char))
    if frac > CHAR_FRACTION_TOL:
        raise CharacteristicPointError(f"characteristic fraction {frac:.3g} in the rectangle exceeds {CHAR_FRACTION_TOL}")
    alg = S.alg

    def interior(g):
        nd = g.normal
        Xv = X(g.x)
        div = sf.hs_divergence_at(S, g.x, X, nd)
        CH = sf.C_H_from_varpi(alg, nd.varpi)
        cterm = np.einsum("...ij,...j,...i->...", CH, nd.nu_H, Xv)
        return np.where(nd.char, 0.0, (div + cterm) * g.sigma)

    def curvature(g):
        nd = g.normal
        H = sf.mean_curvature_at(S, g.x)
        val = -H * np.sum(X(g.x) * nd.nu_H, axis=-1) * g.sigma
        return np.where(nd.char, 0.0, val)

    lhs = dn.surface_integral(U, interior, config=config)
    curv = dn.surface_integral(U, curvature, config=config)
    parts = []
    for face in U.boundary:

        def edge(v, face=face):
            x = face.point(v)
            bg = sf.boundary_geometry(S, x, face.tangents(v), face.outward(v))
            val = np.sum(X(x) * bg.PHS_eta, axis=-1) * bg.normal.pH * bg.length
            return np.where(bg.normal.char, 0.0, val)

        parts.append(qd.integrate_curve(face, edge, None, config))
    bnd = qd.total(parts)
    rhs = curv.value + bnd.value
    err = lhs.error_estimate + curv.error_estimate + bnd.error_estimate
    return InequalityReport(
        "divergence",
        lhs.value,
        rhs,
        err,
        kind="identity",
        terms={"interior": lhs.value, "curvature": curv.value, "boundary": bnd.value},
        errors={"interior": lhs.error_estimate, "curvature": curv.error_estimate, "boundary": bnd.error_estimate},
        constants={"characteristic_fraction": frac},
    )


# ------------------------------------------------------------ A/B terms


def A_term(S: Hypersurface, x, r: float, config: QuadratureConfig = qd.DEFAULT) -> QuadratureEstimate:
    """``int_{S_r} |H_H| (1 + sum_i i c_i rho_x^{i-1} |varpi_{H_i}|) sigma_H``."""
    alg, rho = S.alg, S.rho
    x = np.asarray(x, float)
    c = np.array(rho.constants.sup)
    idx = np.arange(2, alg.k + 1)

    def integrand(g):
        nd = g.normal
        H = np.abs(sf.mean_curvature_at(S, g.x))
        d = hn.distance(rho, x, g.x)
        layers = sf.varpi_layer_norms(alg, nd.varpi)
        factor = 1.0 + np.sum(idx * c * d[..., None] ** (idx - 1) * layers, axis=-1)
        return np.where(nd.char, 0.0, H * factor * g.sigma)

    return dn.surface_integral(S, integrand, (x, r), config)


def plain_curvature_integral(S: Hypersurface, x, r: float, config: QuadratureConfig = qd.DEFAULT) -> QuadratureEstimate:
    def integrand(g):
        H = np.abs(sf.mean_curvature_at(S, g.x))
        return np.where(g.normal.char, 0.0, H * g.sigma)

    return dn.surface_integral(S, integrand, (np.asarray(x, float), r), config)


def inA_pointwise(S: Hypersurface, x, points) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise ``<Z_x, nu / |P_H nu|> / rho_x`` and its bound
    ``1 + sum_i i c_i rho_x^{i-1} |varpi_{H_i}|``."""
    alg, rho = S.alg, S.rho
    x = np.asarray(x, float)
    y = np.asarray(points, float)
    nd = sf.normal_data(S, y)
    Z = ca.homothety_vector(alg, np.broadcast_to(x, y.shape), y)
    d = hn.distance(rho, x, y)
    lhs = np.abs(np.sum(Z * nd.nu, axis=-1)) / np.where(nd.char, np.nan, nd.pH) / d
    c = np.array(rho.constants.sup)
    idx = np.arange(2, alg.k + 1)
    bound = 1.0 + np.sum(idx * c * d[..., None] ** (idx - 1) * sf.varpi_layer_norms(alg, nd.varpi), axis=-1)
    return lhs, bound


def _w_eta(S: Hypersurface, x, y, bg: sf.BoundaryGeometry) -> np.ndarray:
    """``|<Z^T - (<Z, nu> / |P_H nu|) nu_H^T, eta>| |P_H nu|``."""
    alg = S.alg
    nd = bg.normal
    Z = ca.homothety_vector(alg, np.broadcast_to(x, y.shape), y)
    zn = np.sum(Z * nd.nu, axis=-1)
    ze = np.sum(Z * bg.eta, axis=-1)
    he = np.sum(nd.nu_H * bg.eta[..., : alg.h], axis=-1)
    # eta is orthogonal to nu, so tangential projections drop out
    val = np.abs(ze * nd.pH - zn * he)
    return np.where(nd.char, 0.0, val)


def B_terms(
    S: Hypersurface, x, r: float, grid: int = LEVEL_GRID, config: QuadratureConfig = qd.DEFAULT
) -> dict:
    """``B_1`` over ``dB(x, r) ∩ S`` and ``B_2`` over ``dS ∩ B(x, r)``.

    The integrand is ``(1/rho_x) |<W, eta>| |P_H nu|`` per unit Riemannian
    length with ``W = Z_x^T - (<Z_x, nu>/|P_H nu|) nu_H^T``; this equals the
    ``sigma_H^{n-2}`` form wherever ``P_HS eta != 0`` and keeps the vertical
    contribution of characteristic boundary arcs.
    """
    rho = S.rho
    x = np.asarray(x, float)
    try:
        home = dn.locate(S, x)
    except Exception:
        home = None
    b1_parts = []
    for ci, ch in enumerate(S.charts):
        _require_planar(ch, "B_terms")
        u0 = home[1] if home is not None and home[0] == ci else None
        ob = dn.oriented_ball_box(S, ch, x, 1.25 * r, u0) if u0 is not None else None
        if ob is not None:
            G = ob.origin + _grid(ch, ob.lo, ob.hi, grid) @ ob.R.T
            vals = np.where(ch.contains(G), hn.distance(rho, x, ch.point(G)), np.inf)
            curves = [ob.origin + c @ ob.R.T for c in level_curves(vals, ob.lo, ob.hi, r)]
            curves = [c for c in curves if np.all(ch.contains(c))]
        else:
            box = dn.ball_box(S, ch, x, 1.25 * r, u0)
            if box is None:
                continue
            lo, hi = box
            G = _grid(ch, lo, hi, grid)
            vals = hn.distance(rho, x, ch.point(G))
            curves = level_curves(vals, lo, hi, r)
        if not curves:
            continue

        def weight(y, bg):
            return _w_eta(S, x, y, bg) * bg.length / hn.distance(rho, x, y)

        b1_parts.append(qd.integrate_polylines(curves, _curve_density(S, ch, weight)))
    B1 = qd.total(b1_parts) if b1_parts else QuadratureEstimate(0.0, 0.0, 0, "polyline-gauss")
    b2_parts = []
    for face in S.boundary:

        def dens(v, face=face):
            y = face.point(v)
            outward = face.outward(v) if face.outward is not None else None
            bg = sf.boundary_geometry(S, y, face.tangents(v), outward, face.orientation)
            d = hn.distance(rho, x, y)
            return _w_eta(S, x, y, bg) * bg.length / d

        region = lambda v, face=face: hn.distance(rho, x, face.point(v)) < r
        b2_parts.append(qd.integrate_curve(face, dens, region, config))
    B2 = qd.total(b2_parts) if b2_parts else QuadratureEstimate(0.0, 0.0, 0, "adaptive-subdivision")
    return {"B0": B1 + B2, "B1": B1, "B2": B2}


def boundary_riemannian_length(S: Hypersurface, x, r: float, config: QuadratureConfig = qd.DEFAULT) -> QuadratureEstimate:
    """``sigma_R^{n-2}(dS ∩ B(x, r))``."""
    x = np.asarray(x, float)
    parts = []
    for face in S.boundary:

        def dens(v, face=face):
            y = face.point(v)
            F = ca.left_invariant_frame(S.alg, y)
            T = np.linalg.solve(F, face.tangents(v))
            return np.sqrt(np.clip(np.linalg.det(np.swapaxes(T, -1, -2) @ T), 0.0, None))

        region = lambda v, face=face: hn.distance(S.rho, x, face.point(v)) < r
        parts.append(qd.integrate_curve(face, dens, region, config))
    return qd.total(parts)


def linear_isoperimetric_check(S: Hypersurface, x, r: float, config: QuadratureConfig = qd.DEFAULT) -> InequalityReport:
    """``(Q - 1) sigma_H(S_r) <= r (A(r) + B_0(r))``."""
    x = np.asarray(x, float)
    Q = S.alg.Q
    area = dn.sigma_H(S, (x, r), config)
    A = A_term(S, x, r, config)
    B = B_terms(S, x, r, config=config)
    lhs = (Q - 1) * area.value
    rhs = r * (A.value + B["B0"].value)
    err = (Q - 1) * area.error_estimate + r * (A.error_estimate + B["B0"].error_estimate)
    return InequalityReport(
        "linear",
        lhs,
        rhs,
        err,
        terms={"sigma_H": area.value, "A": A.value, "B0": B["B0"].value, "B1": B["B1"].value, "B2": B["B2"].value, "r": r},
        errors={"sigma_H": area.error_estimate, "A": A.error_estimate, "B0": B["B0"].error_estimate},
    )


# -------------------------------------------------------------- mu ratio


def mu_measure(S: Hypersurface, x, t: float, config: QuadratureConfig = qd.DEFAULT) -> QuadratureEstimate:
    """``int_{S_t} |1 - <grad_H rho_x, nu_H> <Z_x, nu / |P_H nu|> / rho_x| sigma_H``."""
    alg, rho = S.alg, S.rho
    x = np.asarray(x, float)

    def integrand(g):
        nd = g.normal
        y = g.x
        grad = _norm_safe_gradient(rho, x, y)[..., : alg.h]
        Z = ca.homothety_vector(alg, np.broadcast_to(x, y.shape), y)
        d = hn.distance(rho, x, y)
        pH = np.where(nd.char, np.nan, nd.pH)
        val = np.abs(1.0 - np.sum(grad * nd.nu_H, axis=-1) * np.sum(Z * nd.nu, axis=-1) / pH / d)
        return np.where(nd.char, 0.0, val * g.sigma)

    return dn.surface_integral(S, integrand, (x, t), config)


def mu_ratio(S: Hypersurface, x, radii: Optional[Sequence[float]] = None, config: QuadratureConfig = qd.DEFAULT) -> InequalityReport:
    """``mu(S_t) / sigma_H(S_t)`` per radius; ``lhs`` is the value at the
    smallest radius, ``rhs`` the limit ``1``."""
    x = np.asarray(x, float)
    if sf.normal_data(S, x).char:
        raise CharacteristicPointError("mu_ratio needs a non-characteristic center")
    radii = tuple(radii if radii is not None else dn.default_radii(S, x))

    def one(t):
        return mu_measure(S, x, t, config), dn.sigma_H(S, (x, t), config)

    rows, ratios, errs = [], [], []
    for t, (mu, sig) in zip(radii, qd.parallel_map(one, radii)):
        ratio = mu.value / sig.value if sig.value > 0 else float("nan")
        err = abs(ratio) * (mu.error_estimate / max(abs(mu.value), 1e-300) + sig.error_estimate / max(sig.value, 1e-300))
        rows.append({"t": t, "mu": mu.value, "sigma_H": sig.value, "ratio": ratio, "error": err})
        ratios.append(ratio)
        errs.append(err)
    lim, unc = dn.richardson_limit(radii, ratios, errs)
    envelope = max((abs(r - 1.0) / t for r, t in zip(ratios, radii)), default=0.0)
    rep = InequalityReport(
        "mu-ratio",
        ratios[-1],
        1.0,
        errs[-1],
        kind="identity",
        rows=rows,
        terms={"limit": lim, "limit_uncertainty": unc, "envelope_C": envelope},
    )
    rep.verdict = "holds" if abs(ratios[-1] - 1.0) <= max(0.01, errs[-1]) else "violated"
    return rep


# ----------------------------------------------------------- monotonicity


def monotonicity_profile(
    S: Hypersurface, x, radii: Optional[Sequence[float]] = None, config: QuadratureConfig = qd.DEFAULT
) -> InequalityReport:
    """``-m'(t) <= (A(t) + B_2(t)) / t^{Q-1}`` on interior grid radii and the
    exponential form ``m(t) e^{H0 t}`` nondecreasing between grid radii."""
    alg = S.alg
    x = np.asarray(x, float)
    Q = alg.Q
    nd = sf.normal_data(S, x)
    flags = ()
    if nd.char:
        flags = ("center is characteristic: outside the hypothesis of the monotonicity statement",)
    radii = tuple(radii if radii is not None else dn.default_radii(S, x))
    t = np.array(radii, float)
    C_dim = 2.0 * sum(S.rho.constants.sup)

    def one(r):
        return (
            dn.sigma_H(S, (x, r), config),
            A_term(S, x, r, config),
            B_terms(S, x, r, config=config)["B2"],
            boundary_riemannian_length(S, x, r, config),
        )

    results = qd.parallel_map(one, radii)
    m = np.array([res[0].value for res in results]) / t ** (Q - 1)
    me = np.array([res[0].error_estimate for res in results]) / t ** (Q - 1)
    H0 = sample_H0(S, (x, float(t.max())))
    rows, verdicts = [], []
    for j in range(1, len(t) - 1):
        dt = t[j - 1] - t[j + 1]
        deriv = (m[j - 1] - m[j + 1]) / dt
        derr = (me[j - 1] + me[j + 1]) / dt
        _, A, B2, L = results[j]
        rhs = (A.value + B2.value) / t[j] ** (Q - 1)
        rhs_err = (A.error_estimate + B2.error_estimate) / t[j] ** (Q - 1)
        refined = rhs + C_dim * t[j] * L.value / t[j] ** (Q - 1)
        # the centered difference has an O(dt^2 m'') truncation error
        trunc = abs(m[j - 1] - 2 * m[j] + m[j + 1]) / dt
        err = derr + rhs_err + trunc
        v = verdict(rhs + deriv, err)
        verdicts.append(v)
        rows.append(
            {"t": float(t[j]), "m": float(m[j]), "minus_dm_dt": float(-deriv), "rhs": float(rhs),
             "rhs_refined": float(refined), "error": float(err), "verdict": v, "kind": "derivative"}
        )
    exp_rows = []
    order = np.argsort(t)
    for a, b in zip(order[:-1], order[1:]):
        lo_v = m[a] * math.exp(H0 * t[a])
        hi_v = m[b] * math.exp(H0 * t[b])
        err = me[a] * math.exp(H0 * t[a]) + me[b] * math.exp(H0 * t[b])
        v = verdict(hi_v - lo_v, err)
        verdicts.append(v)
        exp_rows.append(
            {"t": float(t[a]), "t_next": float(t[b]), "m_exp": float(lo_v), "m_exp_next": float(hi_v),
             "error": float(err), "verdict": v, "kind": "exponential"}
        )
    rows.extend(exp_rows)
    # headline: the exponential form on the worst interval
    worst = min(exp_rows, key=lambda r: (r["m_exp_next"] - r["m_exp"]) + r["error"]) if exp_rows else None
    rep = InequalityReport(
        "monotonicity",
        worst["m_exp"] if worst else 0.0,
        worst["m_exp_next"] if worst else 0.0,
        worst["error"] if worst else 0.0,
        rows=rows,
        constants={"H0": H0, "C_dim": C_dim},
        terms={"m": m.tolist(), "radii": t.tolist(), "m_spread": float((m.max() - m.min()) / max(m.mean(), 1e-300))},
        flags=flags,
    )
    rep.verdict = "violated" if "violated" in verdicts else ("holds" if all(v == "holds" for v in verdicts) else "inconclusive")
    return rep


# ----------------------------------------------------------- isoperimetric


def horizontal_boundary_measure(S: Hypersurface, config: QuadratureConfig = qd.DEFAULT) -> QuadratureEstimate:
    """``sigma_H^{n-2}(dS)`` with the ``|P_H nu| |P_HS eta|`` density."""
    parts = [qd.integrate_curve(c, lambda v, c=c: sf.sigma_n2_density(c, v, S), None, config) for c in S.boundary]
    return qd.total(parts)


def isoperimetric_check(S: Hypersurface, config: QuadratureConfig = qd.DEFAULT) -> InequalityReport:
    """``sigma_H(S)^{(Q-2)/(Q-1)} <= C_Isop (int |H_H| sigma_H + sigma_H^{n-2}(dS))``
    with ``C_Isop = 2 * 2^Q / K_1^{1/(Q-1)}``, plus the empirical constant."""
    alg = S.alg
    Q = alg.Q
    C_isop, K1 = _isop_constant(alg, S.rho)
    area = dn.sigma_H(S, None, config)
    curv = dn.surface_integral(
        S, lambda g: np.where(g.normal.char, 0.0, np.abs(sf.mean_curvature_at(S, g.x)) * g.sigma), None, config
    )
    bnd = horizontal_boundary_measure(S, config)
    e = (Q - 2) / (Q - 1)
    lhs = max(area.value, 0.0) ** e
    lhs_err = e * max(area.value, 1e-300) ** (e - 1) * area.error_estimate if area.value > 0 else 0.0
    denom = curv.value + bnd.value
    denom_err = curv.error_estimate + bnd.error_estimate
    if denom > denom_err:
        C_emp = lhs / denom
    elif lhs > lhs_err:
        C_emp = math.inf
    else:
        C_emp = 0.0
    return InequalityReport(
        "isoperimetric",
        lhs,
        C_isop * denom,
        lhs_err + C_isop * denom_err,
        constants={"C_Isop": C_isop, "K1": K1},
        terms={"sigma_H": area.value, "curvature": curv.value, "boundary": bnd.value, "C_emp": C_emp},
        errors={"sigma_H": area.error_estimate, "curvature": curv.error_estimate, "boundary": bnd.error_estimate},
    )


def thin_rectangle_probe(alg, rho, lengths=(1.0, 10.0, 100.0), config: QuadratureConfig = qd.DEFAULT) -> InequalityReport:
    """Isoperimetric ratio on vertical rectangles ``y in [0, L], t in [0, 1]``.

    Only the two vertical edges carry ``sigma_H^{n-2}``, so the empirical
    constant is expected to grow like ``L^{(Q-2)/(Q-1)} / 2``.
    """
    from .catalog import vplane

    rows = []
    Q = alg.Q
    for L in lengths:
        dom = [[0.0, float(L)]] + [[0.0, 1.0]] * (alg.n - 2)
        rep = isoperimetric_check(vplane(alg, rho, domain=dom), config)
        pred = float(L) ** ((Q - 2) / (Q - 1)) / 2.0
        rows.append({"L": float(L), "C_emp": rep.terms["C_emp"], "predicted": pred, "ratio": rep.terms["C_emp"] / pred, "verdict": rep.verdict})
    grows = all(b["C_emp"] > a["C_emp"] for a, b in zip(rows, rows[1:]))
    rep = InequalityReport(
        "isoperimetric-thin-rectangle-probe",
        rows[-1]["C_emp"],
        rows[-1]["predicted"],
        0.0,
        kind="probe",
        verdict="finding",
        rows=rows,
        terms={"monotone_growth": grows, "exponent": (Q - 2) / (Q - 1)},
        notes=("empirical constant grows without bound along the family; recorded as a finding",),
    )
    return rep


# ------------------------------------------------------------- asymptotics


def asymptotic_check(
    S: Hypersurface, x, radii: Optional[Sequence[float]] = None, config: QuadratureConfig = qd.DEFAULT
) -> InequalityReport:
    """``sigma_H(S_t) >= kappa t^{Q-1} exp(-t H0 f)`` per radius.

    Non-characteristic centers use ``f = 1``.  At characteristic centers
    ``kappa`` comes from the limit graph and ``f = kappa + b_rho`` for the
    Korányi norm on Heisenberg groups, ``f = kappa + d_rho`` otherwise.
    """
    alg, rho = S.alg, S.rho
    x = np.asarray(x, float)
    Q = alg.Q
    radii = tuple(radii if radii is not None else dn.default_radii(S, x))
    nd = sf.normal_data(S, x)
    flags, constants = (), {}
    if not nd.char:
        kappa = dn.metric_factor_noncharacteristic(alg, rho, nd.nu_H)
        factor = 1.0
        variant = "non-characteristic"
    else:
        po = sf.point_order(S, x)
        kappa = dn.metric_factor_characteristic(alg, rho, po)
        bundle = dn.constants_bundle(alg, rho, config=None)
        if rho.kind == "koranyi":
            factor, variant = kappa.value + bundle.b_rho, "characteristic-koranyi"
        else:
            factor, variant = kappa.value + bundle.d_rho, "characteristic"
        flags = (MU_HYPOTHESIS_FLAG,)
        constants.update({"b_rho": bundle.b_rho, "d_rho": bundle.d_rho, "point_order": po.order})
    H0 = sample_H0(S, (x, max(radii)))
    constants.update({"kappa": kappa.value, "kappa_error": kappa.error_estimate, "H0": H0, "factor": factor, "variant": variant})
    rows, verdicts = [], []
    areas = qd.parallel_map(lambda t: dn.sigma_H(S, (x, t), config), radii)
    for t, area in zip(radii, areas):
        bound = kappa.value * t ** (Q - 1) * math.exp(-t * H0 * factor)
        err = area.error_estimate + kappa.error_estimate * t ** (Q - 1)
        v = verdict(area.value - bound, err)
        verdicts.append(v)
        rows.append({"t": t, "sigma_H": area.value, "bound": bound, "error": err, "verdict": v})
    worst = min(rows, key=lambda r: (r["sigma_H"] - r["bound"]) / r["t"] ** (Q - 1))
    rep = InequalityReport(
        "asymptotic", worst["bound"], worst["sigma_H"], worst["error"], rows=rows, constants=constants, flags=flags
    )
    rep.verdict = combine_verdicts(verdicts)
    return rep


# ----------------------------------------------------------------- Sobolev


def check_support(S: Hypersurface, psi: SmoothFunction, band: float = SUPPORT_BAND, m: int = 65) -> float:
    """Max ``|psi|`` on the outer band of every bounded chart edge."""
    worst = 0.0
    for ch in S.charts:
        if not S.boundary:
            continue
        lo, hi = np.array(ch.lo), np.array(ch.hi)
        U = sf.grid_points(lo, hi, m)
        w = band * (hi - lo)
        near = np.any((U <= lo + w) | (U >= hi - w), axis=-1)
        if near.any():
            worst = max(worst, float(np.max(np.abs(psi.value(ch.point(U[near]))))))
    return worst


def sobolev_check(
    S: Hypersurface,
    psi: SmoothFunction,
    p: float = 1.0,
    config: QuadratureConfig = qd.DEFAULT,
) -> InequalityReport:
    """Sobolev inequality on ``S`` for a test function supported inside the atlas.

    ``p = 1``: ``(int |psi|^{(Q-1)/(Q-2)})^{(Q-2)/(Q-1)} <= C_Isop int (|psi| |H_H| + |grad_HS psi|)``.
    ``1 < p < Q-1``: ``|psi|_{p*} <= C_Isop (H0 |psi|_p + c_{p*} |grad_HS psi|_p)``.
    ``p = Q-1``: the explicit power inequality with exponent ``t = Q-1`` on
    which the limit case rests, plus empirical constants for
    ``q in {Q-1, (Q-1)^2/(Q-2)}``.
    """
    alg = S.alg
    Q = alg.Q
    if p < 1 or p > Q - 1:
        raise ValueError(f"p must lie in [1, Q-1] = [1, {Q - 1}]")
    leak = check_support(S, psi)
    if leak >= SUPPORT_TOL:
        raise SupportError(f"test function reaches {leak:.3g} near the atlas boundary")
    C_isop, K1 = _isop_constant(alg, S.rho)
    H0 = sample_H0(S)

    def moment(fn):
        return dn.surface_integral(S, lambda g: np.where(g.normal.char, 0.0, fn(g) * g.sigma), None, config)

    def abs_psi(g):
        return np.abs(psi.value(g.x))

    def grad_norm(g):
        return np.linalg.norm(sf.grad_HS_at(S, g.x, psi, g.normal), axis=-1)

    def abs_H(g):
        return np.nan_to_num(np.abs(sf.mean_curvature_at(S, g.x)))

    def lp(fn, q):
        est = moment(lambda g: fn(g) ** q)
        v = max(est.value, 0.0)
        val = v ** (1.0 / q)
        err = val / q * est.error_estimate / v if v > 0 else est.error_estimate ** (1.0 / q)
        return val, err

    constants = {"C_Isop": C_isop, "K1": K1, "H0": H0, "p": p}
    if p == 1:
        e = (Q - 1) / (Q - 2)
        lhs, lhs_err = lp(abs_psi, e)
        integ = moment(lambda g: abs_psi(g) * abs_H(g) + grad_norm(g))
        denom = integ.value
        C_emp = lhs / denom if denom > 0 else (0.0 if lhs == 0 else math.inf)
        return InequalityReport(
            "sobolev-p1",
            lhs,
            C_isop * denom,
            lhs_err + C_isop * integ.error_estimate,
            constants=constants,
            terms={"norm_lhs": lhs, "integral": denom, "C_emp": C_emp},
        )
    if p < Q - 1:
        pstar = 1.0 / (1.0 / p - 1.0 / (Q - 1))
        cps = pstar * (Q - 2) / (Q - 1)
        lhs, lhs_err = lp(abs_psi, pstar)
        npsi, e1 = lp(abs_psi, p)
        ngrad, e2 = lp(grad_norm, p)
        rhs = C_isop * (H0 * npsi + cps * ngrad)
        denom = npsi + ngrad
        constants.update({"p_star": pstar, "c_p_star": cps})
        return InequalityReport(
            f"sobolev-p{p:g}",
            lhs,
            rhs,
            lhs_err + C_isop * (H0 * e1 + cps * e2),
            constants=constants,
            terms={"norm_p_star": lhs, "norm_p": npsi, "grad_norm_p": ngrad, "C_emp": lhs / denom if denom > 0 else 0.0},
        )
    # limit case p = Q - 1
    tpow = Q - 1.0
    e = (Q - 1) / (Q - 2)
    lhs_est = moment(lambda g: abs_psi(g) ** (tpow * e))
    lhs = max(lhs_est.value, 0.0) ** (1.0 / e)
    lhs_err = (lhs / e) * lhs_est.error_estimate / lhs_est.value if lhs_est.value > 0 else 0.0
    r_est = moment(lambda g: H0 * abs_psi(g) ** tpow + tpow * abs_psi(g) ** (tpow - 1) * grad_norm(g))
    npsi, _ = lp(abs_psi, p)
    ngrad, _ = lp(grad_norm, p)
    denom = npsi + ngrad
    emp = {}
    for q in (Q - 1.0, (Q - 1.0) ** 2 / (Q - 2.0)):
        nq, _ = lp(abs_psi, q)
        emp[f"C_emp_q{q:g}"] = nq / denom if denom > 0 else 0.0
    constants.update({"t": tpow})
    return InequalityReport(
        f"sobolev-p{p:g}-limit",
        lhs,
        C_isop * r_est.value,
        lhs_err + C_isop * r_est.error_estimate,
        constants=constants,
        terms={"norm_p": npsi, "grad_norm_p": ngrad, **emp},
    )
