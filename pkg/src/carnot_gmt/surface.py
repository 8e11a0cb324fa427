"""Hypersurfaces in Carnot groups and their pointwise horizontal geometry.

A hypersurface couples a defining function ``phi`` (normals and curvature
come from its derivatives) with an atlas of box charts (integration happens
in chart coordinates).  Vectors called "frame components" are expressed in
the orthonormal left-invariant frame, so their Euclidean inner product is
the ambient metric.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import ndimage
from scipy.optimize import minimize

from . import algebra as ca
from .algebra import StratifiedAlgebra
from .errors import (
    CharacteristicPointError,
    DegenerateLevelSetError,
    MalformedInputError,
    NotCharacteristicError,
)
from .homnorm import HomogeneousNorm
from .poly import Polynomial

TOL_CHAR = 1e-6
FD_REL_STEP = 1e-5


def _fd_step(x: np.ndarray) -> np.ndarray:
    return FD_REL_STEP * (1.0 + np.linalg.norm(x, axis=-1))


@dataclass(frozen=True)
class SmoothFunction:
    """Scalar field on the group with optional analytic derivatives.

    Missing derivatives fall back to central differences with step
    ``1e-5 (1 + |x|)``; the Hessian fallback is Richardson-refined.
    """

    f: Callable[[np.ndarray], np.ndarray]
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hess: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def value(self, x) -> np.ndarray:
        return np.asarray(self.f(np.asarray(x, float)), float)

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if self.grad is not None:
            return np.asarray(self.grad(x), float)
        return central_gradient(self.f, x)

    def hessian(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if self.hess is not None:
            return np.asarray(self.hess(x), float)
        h = _fd_step(x)

        def diff(step):
            cols = []
            for l in range(x.shape[-1]):
                e = np.zeros(x.shape[-1])
                e[l] = 1.0
                d = step[..., None] * e
                cols.append((self.gradient(x + d) - self.gradient(x - d)) / (2 * step[..., None]))
            return np.stack(cols, axis=-1)

        H = (4.0 * diff(0.5 * h) - diff(h)) / 3.0
        return 0.5 * (H + np.swapaxes(H, -1, -2))


LevelSet = SmoothFunction


def central_gradient(f, x: np.ndarray, step=None) -> np.ndarray:
    h = _fd_step(x) if step is None else np.broadcast_to(step, x.shape[:-1])
    out = np.empty_like(x)
    for i in range(x.shape[-1]):
        d = np.zeros_like(x)
        d[..., i] = h
        out[..., i] = (np.asarray(f(x + d)) - np.asarray(f(x - d))) / (2 * h)
    return out


@dataclass(frozen=True)
class Chart:
    """Parametrization ``F`` of a surface patch on an axis-aligned box."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    F: Callable[[np.ndarray], np.ndarray]
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = ""

    @property
    def dim(self) -> int:
        return len(self.lo)

    def point(self, u) -> np.ndarray:
        return np.asarray(self.F(np.asarray(u, float)), float)

    def tangents(self, u) -> np.ndarray:
        """Coordinate tangent vectors as columns, shape ``(..., n, d)``."""
        u = np.asarray(u, float)
        if self.jac is not None:
            return np.asarray(self.jac(u), float)
        return _fd_jacobian(self.F, u)

    def contains(self, u, slack: float = 0.0) -> np.ndarray:
        u = np.asarray(u, float)
        return np.all((u >= np.array(self.lo) - slack) & (u <= np.array(self.hi) + slack), axis=-1)


def _fd_jacobian(F, u: np.ndarray) -> np.ndarray:
    h = 1e-6 * (1.0 + np.linalg.norm(u, axis=-1))
    cols = []
    for j in range(u.shape[-1]):
        d = np.zeros_like(u)
        d[..., j] = h
        cols.append((np.asarray(F(u + d)) - np.asarray(F(u - d))) / (2 * h[..., None]))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class CurveChart:
    """``(n-2)``-dimensional chart, a curve when ``n = 3``.

    ``outward`` optionally returns a coordinate vector pointing out of the
    surface along this boundary piece; otherwise ``orientation`` fixes the
    in-surface normal by ``det[tangents | eta | nu] > 0``.
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    gamma: Callable[[np.ndarray], np.ndarray]
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None
    orientation: int = 1
    outward: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = ""

    @property
    def dim(self) -> int:
        return len(self.lo)

    def point(self, v) -> np.ndarray:
        return np.asarray(self.gamma(np.asarray(v, float)), float)

    def tangents(self, v) -> np.ndarray:
        v = np.asarray(v, float)
        if self.jac is not None:
            return np.asarray(self.jac(v), float)
        return _fd_jacobian(self.gamma, v)


def chart_face(chart: Chart, axis: int, side: int) -> CurveChart:
    """Face ``u[axis] = lo`` (side -1) or ``hi`` (side +1) of a chart box."""
    fixed = chart.hi[axis] if side > 0 else chart.lo[axis]
    keep = [j for j in range(chart.dim) if j != axis]

    def lift(v):
        v = np.asarray(v, float)
        return np.insert(v, axis, fixed, axis=-1)

    def gamma(v):
        return chart.point(lift(v))

    def jac(v):
        return chart.tangents(lift(v))[..., keep]

    def outward(v):
        return side * chart.tangents(lift(v))[..., axis]

    name = f"{chart.label}:u{axis + 1}={'hi' if side > 0 else 'lo'}"
    return CurveChart(
        tuple(chart.lo[j] for j in keep), tuple(chart.hi[j] for j in keep), gamma, jac, 1, outward, name
    )


def box_faces(chart: Chart) -> tuple[CurveChart, ...]:
    return tuple(chart_face(chart, a, s) for a in range(chart.dim) for s in (-1, 1))


@dataclass(frozen=True)
class Hypersurface:
    alg: StratifiedAlgebra
    rho: HomogeneousNorm
    levelset: SmoothFunction
    charts: tuple[Chart, ...]
    boundary: tuple[CurveChart, ...] = ()
    name: str = ""
    tol_char: float = TOL_CHAR

    def residual(self, samples: int = 9) -> float:
        """Max ``|phi o F|`` over a grid in every chart."""
        worst = 0.0
        for ch in self.charts:
            U = grid_points(ch.lo, ch.hi, samples)
            worst = max(worst, float(np.max(np.abs(self.levelset.value(ch.point(U))))))
        return worst


def grid_points(lo, hi, m: int) -> np.ndarray:
    axes = [np.linspace(a, b, m) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=-1)


# ------------------------------------------------------------ point geometry


@dataclass
class NormalData:
    """Batched normal geometry at group points (frame components)."""

    frame: np.ndarray
    grad: np.ndarray
    nu: np.ndarray
    pH: np.ndarray
    nu_H: np.ndarray
    varpi: np.ndarray
    char: np.ndarray


def normal_data(S: Hypersurface, x, tol_char: Optional[float] = None) -> NormalData:
    alg = S.alg
    tol = S.tol_char if tol_char is None else tol_char
    x = np.asarray(x, float)
    F = ca.left_invariant_frame(alg, x)
    g = np.einsum("...aj,...a->...j", F, S.levelset.gradient(x))
    gn = np.linalg.norm(g, axis=-1)
    if np.any(gn == 0):
        raise DegenerateLevelSetError("gradient of the defining function vanishes")
    nu = g / gn[..., None]
    pH = np.linalg.norm(nu[..., : alg.h], axis=-1)
    char = pH < tol
    safe = np.where(char, 1.0, pH)[..., None]
    nu_H = np.where(char[..., None], 0.0, nu[..., : alg.h] / safe)
    varpi = np.where(char[..., None], 0.0, nu[..., alg.h :] / safe)
    return NormalData(F, g, nu, pH, nu_H, varpi, char)


@dataclass
class Geometry:
    """Batched chart geometry; ``sigma`` is the H-perimeter density."""

    u: np.ndarray
    x: np.ndarray
    normal: NormalData
    tangents: np.ndarray
    area: np.ndarray
    sigma: np.ndarray


def chart_geometry(S: Hypersurface, chart: Chart, U) -> Geometry:
    U = np.asarray(U, float)
    x = chart.point(U)
    nd = normal_data(S, x)
    T = np.linalg.solve(nd.frame, chart.tangents(U))
    gram = np.swapaxes(T, -1, -2) @ T
    area = np.sqrt(np.clip(np.linalg.det(gram), 0.0, None))
    sigma = np.where(nd.char, 0.0, nd.pH * area)
    return Geometry(U, x, nd, T, area, sigma)


@dataclass(frozen=True)
class SurfacePointData:
    nu: np.ndarray
    pH_nu_norm: float
    nu_H: Optional[np.ndarray]
    varpi: Optional[np.ndarray]
    varpi_layers: tuple
    mean_curv_H: float
    riem_area_density: float
    is_characteristic: bool
    point: np.ndarray


def point_data(S: Hypersurface, chart: Chart, u) -> SurfacePointData:
    u = np.asarray(u, float)
    if u.shape != (chart.dim,) or not chart.contains(u, 1e-12):
        raise MalformedInputError(f"chart parameter {u} outside domain")
    geo = chart_geometry(S, chart, u)
    nd = geo.normal
    char = bool(nd.char)
    H = float("nan") if char else float(mean_curvature_at(S, geo.x))
    varpi = None if char else nd.varpi
    layers = ()
    if varpi is not None:
        layers = tuple(
            varpi[S.alg.layer_slice(i).start - S.alg.h : S.alg.layer_slice(i).stop - S.alg.h]
            for i in range(2, S.alg.k + 1)
        )
    return SurfacePointData(
        nu=nd.nu,
        pH_nu_norm=float(nd.pH),
        nu_H=None if char else nd.nu_H,
        varpi=varpi,
        varpi_layers=layers,
        mean_curv_H=H,
        riem_area_density=float(geo.area),
        is_characteristic=char,
        point=geo.x,
    )


def sigma_H_density(S: Hypersurface, chart: Chart, u) -> np.ndarray:
    return chart_geometry(S, chart, u).sigma


def varpi_layer_norms(alg: StratifiedAlgebra, varpi: np.ndarray) -> np.ndarray:
    """``|varpi_{H_i}|`` for ``i = 2..k``, shape ``(..., k-1)``."""
    h = alg.h
    return np.stack(
        [
            np.linalg.norm(varpi[..., alg.layer_slice(i).start - h : alg.layer_slice(i).stop - h], axis=-1)
            for i in range(2, alg.k + 1)
        ],
        axis=-1,
    )


def C_H_from_varpi(alg: StratifiedAlgebra, varpi: np.ndarray) -> np.ndarray:
    sl = alg.layer_slice(2)
    blocks = alg.C[: alg.h, : alg.h, sl]  # (h, h, h_2)
    return np.einsum("ija,...a->...ij", blocks, varpi[..., : sl.stop - sl.start])


def C_H_matrix(S: Hypersurface, chart: Chart, u) -> np.ndarray:
    """``sum_{alpha in H_2} varpi_alpha C^alpha_H``."""
    nd = chart_geometry(S, chart, u).normal
    if np.any(nd.char):
        raise CharacteristicPointError("C_H is undefined at characteristic points")
    return C_H_from_varpi(S.alg, nd.varpi)


# -------------------------------------------------------------- curvature


def horizontal_hessian(S: Hypersurface, x) -> tuple[np.ndarray, np.ndarray]:
    """``p_j = X_j phi`` and ``M_ij = X_i X_j phi`` for ``i, j <= h``."""
    alg = S.alg
    x = np.asarray(x, float)
    h = alg.h
    G = S.levelset.gradient(x)
    Hs = S.levelset.hessian(x)
    F = ca.left_invariant_frame(alg, x)
    dF = ca.frame_derivatives(alg, x)  # [l, a, i]
    p = np.einsum("...aj,...a->...j", F[..., :h], G)
    grad_p = np.einsum("...laj,...a->...jl", dF[..., :h], G) + np.einsum("...aj,...al->...jl", F[..., :h], Hs)
    M = np.einsum("...li,...jl->...ij", F[..., :h], grad_p)
    return p, M


def mean_curvature_at(S: Hypersurface, x) -> np.ndarray:
    """``H_H = -sum_i X_i(X_i phi / |grad_H phi|)``; NaN where characteristic."""
    x = np.asarray(x, float)
    p, M = horizontal_hessian(S, x)
    nd = normal_data(S, x)
    pn = np.linalg.norm(p, axis=-1)
    safe = np.where(nd.char, 1.0, pn)
    n = p / safe[..., None]
    trace = np.trace(M, axis1=-2, axis2=-1) - np.einsum("...i,...ij,...j->...", n, M, n)
    return np.where(nd.char, np.nan, -trace / safe)


def mean_curvature_H(S: Hypersurface, chart: Chart, u) -> float:
    x = chart.point(np.asarray(u, float))
    if normal_data(S, x).char:
        raise CharacteristicPointError("H_H is undefined at characteristic points")
    return float(mean_curvature_at(S, x))


def mean_curvature_fd(S: Hypersurface, x, step: float = 1e-4) -> float:
    """Finite-difference oracle: inner gradient of ``phi`` and the outer
    divergence both by central differences, the latter along group flows
    ``s -> x * (s e_i)``."""
    alg = S.alg
    x = np.asarray(x, float)

    def unit_h(y):
        F = ca.left_invariant_frame(alg, y)
        p = F[..., : alg.h].T @ central_gradient(S.levelset.value, y[None])[0]
        return p / np.linalg.norm(p)

    s = step * (1.0 + np.linalg.norm(x))
    total = 0.0
    for i in range(alg.h):
        e = np.zeros(alg.n)
        e[i] = s
        total += (unit_h(ca.bch_product(alg, x, e))[i] - unit_h(ca.bch_product(alg, x, -e))[i]) / (2 * s)
    return -total


# ----------------------------------------------------- horizontal fields


@dataclass(frozen=True)
class HorizontalField:
    """Horizontal vector field given by its first ``h`` frame components.

    ``jacobian`` returns the coordinate Jacobian ``(..., h, n)``.
    """

    value: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.value(np.asarray(x, float)), float)

    def jac(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(x), float)
        h = _fd_step(x)
        cols = []
        for l in range(x.shape[-1]):
            d = np.zeros_like(x)
            d[..., l] = h
            cols.append((self(x + d) - self(x - d)) / (2 * h[..., None]))
        return np.stack(cols, axis=-1)


def hs_projector(nu_H: np.ndarray) -> np.ndarray:
    h = nu_H.shape[-1]
    return np.eye(h) - nu_H[..., :, None] * nu_H[..., None, :]


def hs_divergence_at(S: Hypersurface, x, X: HorizontalField, nd: Optional[NormalData] = None) -> np.ndarray:
    """Trace of ``D X`` over ``HS``, equal to ``sum_j <D_tau_j X, tau_j>``."""
    alg = S.alg
    x = np.asarray(x, float)
    nd = normal_data(S, x) if nd is None else nd
    A = np.einsum("...cl,...li->...ci", X.jac(x), nd.frame[..., : alg.h])  # X_i X^c
    P = hs_projector(nd.nu_H)
    div = np.einsum("...ic,...ci->...", P, A)
    return np.where(nd.char, np.nan, div)


def hs_divergence(S: Hypersurface, chart: Chart, u, X: HorizontalField) -> float:
    x = chart.point(np.asarray(u, float))
    nd = normal_data(S, x)
    if nd.char:
        raise CharacteristicPointError("HS is undefined at characteristic points")
    return float(hs_divergence_at(S, x, X, nd))


def grad_HS_at(S: Hypersurface, x, f: SmoothFunction, nd: Optional[NormalData] = None) -> np.ndarray:
    """Projection onto ``HS`` of the horizontal gradient of ``f``."""
    alg = S.alg
    x = np.asarray(x, float)
    nd = normal_data(S, x) if nd is None else nd
    gH = np.einsum("...aj,...a->...j", nd.frame[..., : alg.h], f.gradient(x))
    out = np.einsum("...ij,...j->...i", hs_projector(nd.nu_H), gH)
    return np.where(nd.char[..., None], 0.0, out)


# --------------------------------------------------- codimension-two data


@dataclass
class BoundaryGeometry:
    """Normal data along an ``(n-2)``-dimensional piece lying in ``S``."""

    x: np.ndarray
    normal: NormalData
    eta: np.ndarray
    PHS_eta: np.ndarray
    length: np.ndarray
    density: np.ndarray


def _complement(T: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of the columns of T."""
    m = T.shape[-1]
    Q, _ = np.linalg.qr(T, mode="complete")
    return Q[..., m:]


def boundary_geometry(
    S: Hypersurface,
    x,
    tangents_coord,
    outward=None,
    orientation: int = 1,
    eta_frame=None,
) -> BoundaryGeometry:
    """In-surface unit normal ``eta`` and ``|P_H nu| |P_HS eta|`` density.

    ``eta`` is orthogonal to ``nu`` and to the tangents.  Its sign follows
    ``outward`` (a coordinate vector) when given, else ``orientation``.
    ``eta_frame`` overrides the construction, e.g. for level curves.
    """
    alg = S.alg
    x = np.asarray(x, float)
    nd = normal_data(S, x)
    T = np.linalg.solve(nd.frame, np.asarray(tangents_coord, float))
    gram = np.swapaxes(T, -1, -2) @ T
    length = np.sqrt(np.clip(np.linalg.det(gram), 0.0, None))
    if eta_frame is None:
        basis = np.concatenate([T, nd.nu[..., :, None]], axis=-1)
        eta = _complement(basis)[..., 0]
        if outward is not None:
            w = np.linalg.solve(nd.frame, np.asarray(outward, float)[..., None])[..., 0]
            sign = np.sign(np.sum(w * eta, axis=-1))
        else:
            full = np.concatenate([T, eta[..., :, None], nd.nu[..., :, None]], axis=-1)
            sign = orientation * np.sign(np.linalg.det(full))
        eta = eta * np.where(sign == 0, 1.0, sign)[..., None]
    else:
        eta = np.asarray(eta_frame, float)
    eH = eta[..., : alg.h]
    PHS = eH - np.sum(eH * nd.nu_H, axis=-1)[..., None] * nd.nu_H
    dens = nd.pH * np.linalg.norm(PHS, axis=-1) * length
    dens = np.where(nd.char, 0.0, dens)
    return BoundaryGeometry(x, nd, eta, PHS, length, dens)


def ambient_sigma_n2(alg: StratifiedAlgebra, x, tangents_coord) -> np.ndarray:
    """``|P_H nu_1 ^ P_H nu_2|`` times the Riemannian ``(n-2)``-density."""
    x = np.asarray(x, float)
    F = ca.left_invariant_frame(alg, x)
    T = np.linalg.solve(F, np.asarray(tangents_coord, float))
    gram = np.swapaxes(T, -1, -2) @ T
    length = np.sqrt(np.clip(np.linalg.det(gram), 0.0, None))
    N = _complement(T)[..., : alg.h, :]
    wedge = np.sqrt(np.clip(np.linalg.det(np.swapaxes(N, -1, -2) @ N), 0.0, None))
    return wedge * length


def sigma_n2_density(curve: CurveChart, v, S: Optional[Hypersurface] = None, alg: Optional[StratifiedAlgebra] = None):
    """Boundary mode when ``S`` is given, ambient mode otherwise."""
    v = np.asarray(v, float)
    x, T = curve.point(v), curve.tangents(v)
    if S is not None:
        outward = curve.outward(v) if curve.outward is not None else None
        return boundary_geometry(S, x, T, outward, curve.orientation).density
    if alg is None:
        raise MalformedInputError("ambient mode needs the algebra")
    return ambient_sigma_n2(alg, x, T)


# -------------------------------------------------- characteristic points


@dataclass(frozen=True)
class CharacteristicCluster:
    chart: int
    u: tuple[float, ...]
    pH: float
    size: int


def characteristic_scan(S: Hypersurface, tol_char: Optional[float] = None, grid: Optional[int] = None):
    """Grid scan for ``|P_H nu| < tol_char`` with one local refinement per
    connected cluster of flagged samples."""
    tol = S.tol_char if tol_char is None else tol_char
    found = []
    for ci, ch in enumerate(S.charts):
        m = grid or (101 if ch.dim <= 2 else 21)
        U = grid_points(ch.lo, ch.hi, m)
        pH = normal_data(S, ch.point(U), tol).pH.reshape((m,) * ch.dim)
        labels, count = ndimage.label(pH < tol, structure=np.ones((3,) * ch.dim))
        Ug = U.reshape((m,) * ch.dim + (ch.dim,))
        for lab in range(1, count + 1):
            idx = np.argwhere(labels == lab)
            vals = pH[tuple(idx.T)]
            best = idx[np.argmin(vals)]
            u0, p0 = Ug[tuple(best)], float(vals.min())
            if p0 > 0:
                res = minimize(
                    lambda u: float(normal_data(S, ch.point(u), tol).pH),
                    u0,
                    method="L-BFGS-B",
                    bounds=list(zip(ch.lo, ch.hi)),
                )
                if res.fun < p0:
                    u0, p0 = res.x, float(res.fun)
            found.append(CharacteristicCluster(ci, tuple(float(v) for v in u0), p0, int(len(idx))))
    return found


# ------------------------------------------------------------ point order


@dataclass(frozen=True)
class PointOrder:
    """Graph layer ``i``, point order ``Q - i`` and the limit polynomial.

    ``psi_tilde`` is ``None`` for the empty blow-up.
    """

    layer: int
    order: int
    alpha: int
    psi_tilde: Optional[Polynomial]
    coefficients: dict
    failing: tuple = ()

    @property
    def empty(self) -> bool:
        return self.psi_tilde is None


_STENCILS = {
    0: ({0: 1.0}),
    1: ({-1: -0.5, 1: 0.5}),
    2: ({-1: 1.0, 0: -2.0, 1: 1.0}),
    3: ({-2: -0.5, -1: 1.0, 1: -1.0, 2: 0.5}),
    4: ({-2: 1.0, -1: -4.0, 0: 6.0, 1: -4.0, 2: 1.0}),
}


def _mixed_derivative(psi, exp, steps, n) -> float:
    pieces = [list(_STENCILS[e].items()) for e in exp]
    pts, wts = [], []
    for combo in itertools.product(*pieces):
        z = np.array([k * steps[j] for j, (k, _) in enumerate(combo)])
        pts.append(z)
        wts.append(np.prod([w for _, w in combo]))
    vals = np.asarray(psi(np.array(pts)), float)
    scale = np.prod([steps[j] ** e for j, e in enumerate(exp)])
    return float(np.dot(wts, vals) / scale)


def weighted_taylor(alg: StratifiedAlgebra, psi, alpha: int, max_weight: int, base_step: float = 2e-2) -> dict:
    """Taylor coefficients ``d^b psi(0) / b!`` for multi-indices of weighted
    degree ``1..max_weight`` in the variables other than ``alpha``.

    Steps scale as ``base_step**ord(j)``; two step sizes are combined by
    Richardson extrapolation.
    """
    n = alg.n
    order = [int(o) for o in alg.ord]
    free = [j for j in range(n) if j != alpha]
    out = {}
    ranges = [range(0, max_weight // order[j] + 1) for j in free]
    for combo in itertools.product(*ranges):
        w = sum(e * order[j] for e, j in zip(combo, free))
        deg = sum(combo)
        if w == 0 or w > max_weight or deg > min(alg.k, 4):
            continue
        exp = [0] * n
        for e, j in zip(combo, free):
            exp[j] = e
        est = []
        for s in (base_step, 0.5 * base_step):
            steps = [s ** order[j] for j in range(n)]
            est.append(_mixed_derivative(psi, exp, steps, n))
        d = (4.0 * est[1] - est[0]) / 3.0
        out[tuple(exp)] = d / math.prod(math.factorial(e) for e in exp)
    return out


def implicit_graph(S: Hypersurface, x, alpha: int, iters: int = 40):
    """``psi`` with ``x^{-1} * S`` locally equal to ``{z_alpha = psi(z)}``,
    solved by Newton iteration on the translated defining function."""
    alg = S.alg
    x = np.asarray(x, float)
    e = np.zeros(alg.n)
    e[alpha] = 1.0

    def psi(z):
        z = np.array(z, float)
        z[..., alpha] = 0.0
        s = np.zeros(z.shape[:-1])
        for _ in range(iters):
            y = z + s[..., None] * e
            p = ca.bch_product(alg, x, y)
            val = S.levelset.value(p)
            J = ca.left_translation_jacobian(alg, x, y)[..., :, alpha]
            ds = np.sum(S.levelset.gradient(p) * J, axis=-1)
            step = val / ds
            s = s - step
            if np.all(np.abs(step) < 1e-15):
                break
        return s

    return psi


def point_order(
    S: Optional[Hypersurface],
    x,
    psi: Optional[Callable] = None,
    alpha: Optional[int] = None,
    tol: float = 1e-6,
    alg: Optional[StratifiedAlgebra] = None,
) -> PointOrder:
    """Order of a characteristic point from the graph ``x_alpha = psi``.

    ``psi`` takes ``(..., n)`` arrays whose ``alpha`` entry is ignored.  When
    omitted it is derived from the defining function of ``S``.
    """
    alg = S.alg if alg is None else alg
    if alpha is None:
        alpha = alg.n - 1
    i = int(alg.ord[alpha])
    if i < 2:
        raise NotCharacteristicError("a graph over a horizontal direction has no characteristic point")
    if psi is None:
        psi = implicit_graph(S, x, alpha)
    zero = np.zeros((1, alg.n))
    if abs(float(np.asarray(psi(zero)).ravel()[0])) > 1e-9:
        raise NotCharacteristicError("psi(0) != 0: the point is not on the graph")
    coeffs = weighted_taylor(alg, psi, alpha, i)
    for exp, c in coeffs.items():
        if sum(exp[: alg.h]) == 1 and sum(exp) == 1 and abs(c) > tol:
            raise NotCharacteristicError(f"horizontal derivative {exp} = {c:.3g} is nonzero")
    order = [int(o) for o in alg.ord]
    failing = tuple(
        sorted(exp for exp, c in coeffs.items() if abs(c) > tol and np.dot(exp, order) < i)
    )
    top = {exp: c for exp, c in coeffs.items() if np.dot(exp, order) == i and abs(c) > tol}
    psi_t = None if failing else Polynomial.from_dict(alg.n, top)
    return PointOrder(layer=i, order=alg.Q - i, alpha=alpha, psi_tilde=psi_t, coefficients=coeffs, failing=failing)
