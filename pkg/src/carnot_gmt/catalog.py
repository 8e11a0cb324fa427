"""Built-in hypersurfaces with analytic charts and derivatives."""

from __future__ import annotations

import re

import numpy as np

from . import algebra as ca
from .algebra import StratifiedAlgebra
from .errors import MalformedInputError
from .homnorm import HomogeneousNorm
from .poly import Polynomial
from .surface import TOL_CHAR, Chart, Hypersurface, SmoothFunction, box_faces


def _coordinate_function(n: int, index: int) -> SmoothFunction:
    e = np.zeros(n)
    e[index] = 1.0
    return SmoothFunction(
        lambda x: x[..., index],
        lambda x: np.broadcast_to(e, x.shape).copy(),
        lambda x: np.zeros(x.shape + (n,)),
    )


def _domain(domain, d: int, default) -> tuple[tuple[float, ...], tuple[float, ...]]:
    if domain is None:
        domain = [default] * d
    try:
        lo = tuple(float(a) for a, _ in domain)
        hi = tuple(float(b) for _, b in domain)
    except (TypeError, ValueError) as exc:
        raise MalformedInputError(f"domain must be a list of [lo, hi] pairs: {exc}") from exc
    if len(lo) != d or any(b <= a for a, b in zip(lo, hi)):
        raise MalformedInputError(f"domain needs {d} intervals with lo < hi")
    return lo, hi


def coordinate_hyperplane(
    alg: StratifiedAlgebra,
    rho: HomogeneousNorm,
    index: int,
    domain=None,
    bounded: bool = True,
    name: str = "",
    tol_char: float = TOL_CHAR,
) -> Hypersurface:
    """``{x_index = 0}`` with the identity chart on the other coordinates."""
    n = alg.n
    keep = [j for j in range(n) if j != index]
    lo, hi = _domain(domain, n - 1, (-1.0, 1.0))
    J = np.zeros((n, n - 1))
    J[keep, np.arange(n - 1)] = 1.0

    def F(u):
        return np.insert(np.asarray(u, float), index, 0.0, axis=-1)

    def jac(u):
        return np.broadcast_to(J, np.shape(u)[:-1] + J.shape).copy()

    chart = Chart(lo, hi, F, jac, label=name or f"x{index + 1}=0")
    faces = box_faces(chart) if bounded else ()
    return Hypersurface(alg, rho, _coordinate_function(n, index), (chart,), faces, name, tol_char)


def vplane(alg, rho, domain=None, bounded=True, tol_char=TOL_CHAR) -> Hypersurface:
    """Vertical plane ``{x_1 = 0}``, chart ``(y, t) -> (0, y, t)`` in ``H^1``."""
    return coordinate_hyperplane(alg, rho, 0, domain, bounded, "vplane", tol_char)


def cplane(alg, rho, domain=None, bounded=True, tol_char=TOL_CHAR) -> Hypersurface:
    """``{x_n = 0}``; the plane ``{t = 0}`` in Heisenberg groups."""
    return coordinate_hyperplane(alg, rho, alg.n - 1, domain, bounded, "cplane", tol_char)


def koranyi_sphere(alg, rho, R: float = 1.0, tol_char=TOL_CHAR) -> Hypersurface:
    """Korányi sphere ``{|x_H|^4 + 16 t^2 = R^4}`` in ``H^1``.

    Chart ``(theta, phi)`` pushes the Euclidean sphere point
    ``(cos theta cos phi, cos theta sin phi, sin theta)`` onto the gauge
    sphere by dilation; the poles ``theta = +-pi/2`` are coordinate seams.
    """
    if alg.n != 3 or alg.k != 2:
        raise MalformedInputError("koranyi_sphere is provided for H^1 only")
    gauge = HomogeneousNorm(alg, "koranyi")
    R = float(R)
    if R <= 0:
        raise MalformedInputError("sphere radius must be positive")

    def w_and_dw(u):
        th, ph = u[..., 0], u[..., 1]
        w = np.stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), np.sin(th)], axis=-1)
        dth = np.stack([-np.sin(th) * np.cos(ph), -np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)
        dph = np.stack([-np.cos(th) * np.sin(ph), np.cos(th) * np.cos(ph), np.zeros_like(th)], axis=-1)
        return w, np.stack([dth, dph], axis=-1)

    def F(u):
        w, _ = w_and_dw(np.asarray(u, float))
        return ca.dilate(alg, R / gauge(w), w)

    def jac(u):
        w, dw = w_and_dw(np.asarray(u, float))
        r = gauge(w)
        lam = R / r
        dlam = -(R / r**2)[..., None] * np.einsum("...a,...ad->...d", gauge.coord_gradient(w), dw)
        scale = lam[..., None] ** alg.ord
        dscale = alg.ord * lam[..., None] ** (alg.ord - 1)
        return scale[..., :, None] * dw + (dscale * w)[..., :, None] * dlam[..., None, :]

    def f(x):
        return np.sum(x[..., :2] ** 2, axis=-1) ** 2 + 16 * x[..., 2] ** 2 - R**4

    def grad(x):
        s = np.sum(x[..., :2] ** 2, axis=-1)[..., None]
        return np.concatenate([4 * s * x[..., :2], 32 * x[..., 2:3]], axis=-1)

    def hess(x):
        xh = x[..., :2]
        s = np.sum(xh**2, axis=-1)
        H = np.zeros(x.shape + (3,))
        H[..., :2, :2] = 4 * s[..., None, None] * np.eye(2) + 8 * xh[..., :, None] * xh[..., None, :]
        H[..., 2, 2] = 32.0
        return H

    chart = Chart((-np.pi / 2, -np.pi), (np.pi / 2, np.pi), F, jac, label=f"koranyi_sphere({R:g})")
    return Hypersurface(alg, rho, SmoothFunction(f, grad, hess), (chart,), (), f"koranyi_sphere({R:g})", tol_char)


def graph_surface(
    alg: StratifiedAlgebra,
    rho: HomogeneousNorm,
    alpha: int,
    psi: Polynomial,
    domain=None,
    bounded: bool = True,
    name: str = "graph",
    tol_char: float = TOL_CHAR,
) -> Hypersurface:
    """``{x_alpha = psi(x)}`` with ``psi`` independent of ``x_alpha``."""
    n = alg.n
    if any(e[alpha] for e, _ in psi.terms):
        raise MalformedInputError("graph function must not depend on the graph coordinate")
    keep = [j for j in range(n) if j != alpha]
    lo, hi = _domain(domain, n - 1, (-1.0, 1.0))

    def lift(u):
        return np.insert(np.asarray(u, float), alpha, 0.0, axis=-1)

    def F(u):
        z = lift(u)
        z[..., alpha] = psi(z)
        return z

    def jac(u):
        z = lift(u)
        g = psi.gradient(z)
        J = np.zeros(np.shape(u)[:-1] + (n, n - 1))
        J[..., keep, np.arange(n - 1)] = 1.0
        J[..., alpha, :] = g[..., keep]
        return J

    e = np.zeros(n)
    e[alpha] = 1.0
    phi = SmoothFunction(
        lambda x: x[..., alpha] - psi(x),
        lambda x: e - psi.gradient(x),
        lambda x: -psi.hessian(x),
    )
    chart = Chart(lo, hi, F, jac, label=name)
    faces = box_faces(chart) if bounded else ()
    return Hypersurface(alg, rho, phi, (chart,), faces, name, tol_char)


# expression table: id -> (group names, graph coordinate (0-based), terms)
GRAPHS = {
    "t_eq_x1sq": (("heisenberg1",), 2, {(2, 0, 0): 1.0}),
    "t_eq_x1x2": (("heisenberg1",), 2, {(1, 1, 0): 1.0}),
    "t_eq_x1sq_minus_x2sq": (("heisenberg1",), 2, {(2, 0, 0): 1.0, (0, 2, 0): -1.0}),
    "t_eq_0": (("heisenberg1", "heisenberg2"), -1, {}),
    "x4_eq_x3": (("engel",), 3, {(0, 0, 1, 0): 1.0}),
    "x4_eq_x1cube": (("engel",), 3, {(3, 0, 0, 0): 1.0}),
}


def graph_polynomial(expr_id: str, alg: StratifiedAlgebra) -> tuple[int, Polynomial]:
    if expr_id not in GRAPHS:
        raise MalformedInputError(f"unknown graph expression {expr_id!r}; known: {sorted(GRAPHS)}")
    _, alpha, terms = GRAPHS[expr_id]
    alpha = alg.n - 1 if alpha < 0 else alpha
    if alpha >= alg.n or any(len(e) != alg.n for e in terms):
        raise MalformedInputError(f"graph {expr_id!r} does not fit a group of dimension {alg.n}")
    return alpha, Polynomial.from_dict(alg.n, terms)


SURFACE_NAMES = ("vplane", "cplane", "koranyi_sphere(R)") + tuple(f"graph:{k}" for k in GRAPHS)

_SPHERE = re.compile(r"^koranyi_sphere(?:\(\s*([0-9.eE+-]+)\s*\))?$")


def surface_from_spec(spec, alg: StratifiedAlgebra, rho: HomogeneousNorm, tol_char: float = TOL_CHAR) -> Hypersurface:
    """Catalog name or ``{"name": ..., "domain": [[lo, hi], ...], "bounded": bool, "R": r}``."""
    if isinstance(spec, str):
        spec = {"name": spec}
    if not isinstance(spec, dict) or not isinstance(spec.get("name"), str):
        raise MalformedInputError("surface must be a catalog name or an object with 'name'")
    name = spec["name"].strip()
    domain = spec.get("domain")
    bounded = bool(spec.get("bounded", True))
    if name == "vplane":
        return vplane(alg, rho, domain, bounded, tol_char)
    if name == "cplane":
        return cplane(alg, rho, domain, bounded, tol_char)
    m = _SPHERE.match(name)
    if m:
        R = float(spec.get("R", m.group(1) or 1.0))
        return koranyi_sphere(alg, rho, R, tol_char)
    if name.startswith("graph:"):
        expr_id = name.split(":", 1)[1]
        alpha, psi = graph_polynomial(expr_id, alg)
        return graph_surface(alg, rho, alpha, psi, domain, bounded, name, tol_char)
    raise MalformedInputError(f"unknown surface {name!r}; known: {', '.join(SURFACE_NAMES)}")
