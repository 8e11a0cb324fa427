"""Homogeneous norms, their gradients, layer constants and ball-box radii."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, reduce

import numpy as np
from scipy.optimize import minimize

from . import algebra as ca
from .algebra import StratifiedAlgebra
from .errors import MalformedInputError, SingularPointError

CERTIFY_INFLATION = 1.01
SEARCH_TOL = 1e-4


def default_lambda(k: int) -> float:
    """``2 lcm(1..k)``: every exponent ``lambda / i`` is an even integer."""
    return float(2 * reduce(math.lcm, range(1, k + 1), 1))


@dataclass(frozen=True)
class LayerConstants:
    """Numerical suprema of ``|x_{H_i}|`` on the unit sphere, ``i = 2..k``."""

    sup: tuple[float, ...]
    certified: tuple[float, ...]
    seed: int


@dataclass(frozen=True)
class HomogeneousNorm:
    """Gauge ``(|x_H|^lam + sum_i C_i |x_{H_i}|^{lam/i})^{1/lam}``.

    ``kind="koranyi"`` is the Heisenberg gauge ``(|x_H|^4 + 16 t^2)^{1/4}``,
    i.e. the power gauge with ``lam = 4`` and ``C = (16,)``.
    """

    alg: StratifiedAlgebra
    kind: str = "power"
    lam: float = 0.0
    C: tuple[float, ...] = ()
    seed: int = 0
    coef: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        alg = self.alg
        if self.kind == "koranyi":
            if alg.k != 2 or alg.layer_dims[1] != 1 or alg.h % 2:
                raise MalformedInputError("Koranyi norm requires a Heisenberg group")
            lam, C = 4.0, (16.0,)
        elif self.kind == "power":
            lam = float(self.lam) if self.lam else default_lambda(alg.k)
            C = tuple(float(c) for c in self.C) if self.C else (1.0,) * (alg.k - 1)
            if lam <= 0:
                raise MalformedInputError("lambda must be positive")
            if len(C) != alg.k - 1 or any(c <= 0 for c in C):
                raise MalformedInputError(f"need {alg.k - 1} positive layer weights, got {C}")
        else:
            raise MalformedInputError(f"unknown norm kind {self.kind!r}")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "coef", np.array((1.0,) + C))

    # ------------------------------------------------------------ values

    def layer_norms(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        return np.stack(
            [np.linalg.norm(x[..., self.alg.layer_slice(i)], axis=-1) for i in range(1, self.alg.k + 1)],
            axis=-1,
        )

    def __call__(self, x) -> np.ndarray:
        norms = self.layer_norms(x)
        powers = self.lam / np.arange(1, self.alg.k + 1)
        return np.sum(self.coef * norms**powers, axis=-1) ** (1.0 / self.lam)

    def coord_gradient(self, x) -> np.ndarray:
        """Euclidean gradient in exponential coordinates (``x != 0``)."""
        x = np.asarray(x, float)
        rho = self(x)
        norms = self.layer_norms(x)
        grad = np.empty_like(x)
        for i in range(1, self.alg.k + 1):
            sl = self.alg.layer_slice(i)
            e = self.lam / i - 2.0
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.where(norms[..., i - 1] > 0, norms[..., i - 1] ** e, 0.0)
            grad[..., sl] = (self.coef[i - 1] / i) * w[..., None] * x[..., sl]
        with np.errstate(divide="ignore", invalid="ignore"):
            return grad * (rho ** (1.0 - self.lam))[..., None]

    def frame_gradient(self, x) -> np.ndarray:
        """Components ``X_j rho(x)`` in the left-invariant frame."""
        x = np.asarray(x, float)
        if np.any(self(x) == 0):
            raise SingularPointError("the gauge is not differentiable at the origin")
        F = ca.left_invariant_frame(self.alg, x)
        return np.einsum("...aj,...a->...j", F, self.coord_gradient(x))

    # ----------------------------------------------------- cached constants

    @cached_property
    def constants(self) -> LayerConstants:
        return layer_constants(self, seed=self.seed)

    @cached_property
    def radii(self) -> tuple[float, float]:
        return ballbox_radii(self, seed=self.seed)


def norm_value(rho: HomogeneousNorm, x) -> np.ndarray:
    return rho(x)


def distance(rho: HomogeneousNorm, x, y) -> np.ndarray:
    """Left-invariant distance ``rho(x^{-1} * y)``."""
    return rho(ca.bch_product(rho.alg, ca.inverse(rho.alg, x), y))


def horizontal_gradient(rho: HomogeneousNorm, x) -> np.ndarray:
    """``(X_1 rho, ..., X_h rho)`` at ``x != 0``."""
    return rho.frame_gradient(x)[..., : rho.alg.h]


def translated_frame_gradient(rho: HomogeneousNorm, x, y) -> np.ndarray:
    """Frame gradient of ``rho_x = rho(x^{-1} * .)`` at ``y``.

    Left invariance of the frame means it equals the frame gradient of
    ``rho`` at ``x^{-1} * y``.
    """
    z = ca.bch_product(rho.alg, ca.inverse(rho.alg, x), y)
    return rho.frame_gradient(z)


def radial_identity_residual(rho: HomogeneousNorm, x, y) -> np.ndarray:
    """``|<Z_x(y), grad rho_x(y)> / rho_x(y) - 1|`` with the full gradient."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    d = distance(rho, x, y)
    if np.any(d == 0):
        raise SingularPointError("radial identity is undefined at y = x")
    Z = ca.homothety_vector(rho.alg, x, y)
    g = translated_frame_gradient(rho, x, y)
    return np.abs(np.sum(Z * g, axis=-1) / d - 1.0)


def sample_sphere(rho: HomogeneousNorm, m: int, rng: np.random.Generator) -> np.ndarray:
    """Gaussian samples pushed onto the unit sphere by dilation."""
    z = rng.standard_normal((m, rho.alg.n))
    return ca.dilate(rho.alg, 1.0 / rho(z), z)


def _axis_points(rho: HomogeneousNorm) -> np.ndarray:
    eye = np.eye(rho.alg.n)
    return ca.dilate(rho.alg, 1.0 / rho(eye), eye)


def layer_constants(rho: HomogeneousNorm, seed: int = 0, starts: int = 24) -> LayerConstants:
    """Multi-start maximization of ``|x_{H_i}| / rho(x)^i``.

    The objective is dilation invariant, so it is optimized over
    ``R^n \\ {0}`` and read on the sphere.
    """
    alg = rho.alg
    rng = np.random.default_rng(seed)
    sups = []
    for i in range(2, alg.k + 1):
        sl = alg.layer_slice(i)

        def neg(z, sl=sl, i=i):
            r = float(rho(z))
            return 0.0 if r == 0 else -np.linalg.norm(z[sl]) / r**i

        pool = np.vstack([_axis_points(rho), sample_sphere(rho, starts, rng)])
        best = max(-neg(p) for p in pool)
        ranked = sorted(pool, key=neg)[: max(4, starts // 3)]
        for z0 in ranked:
            res = minimize(neg, z0, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
            best = max(best, -float(res.fun))
        sups.append(best)
    return LayerConstants(
        sup=tuple(sups), certified=tuple(CERTIFY_INFLATION * s for s in sups), seed=seed
    )


def _bisect(pred, lo: float, hi: float, tol: float) -> tuple[float, float]:
    """Shrink ``[lo, hi]`` with ``pred(lo)`` true and ``pred(hi)`` false."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return lo, hi


def box_corners(alg: StratifiedAlgebra) -> np.ndarray:
    grid = np.array(np.meshgrid(*([[-1.0, 1.0]] * alg.n), indexing="ij"))
    return grid.reshape(alg.n, -1).T


def ballbox_radii(
    rho: HomogeneousNorm, seed: int = 0, samples: int = 4096, tol: float = SEARCH_TOL
) -> tuple[float, float]:
    """Certified radii with ``Box(0, r_1) in B(0, 1) in Box(0, r_2)``.

    ``Box(0, r)`` is ``{|y_j| <= r^{ord(j)}}``.  ``r_1`` is the lower end of
    its bisection bracket and ``r_2`` the upper end, so both are on the safe
    side of the tolerance.
    """
    alg = rho.alg
    rng = np.random.default_rng(seed)
    box_pts = np.vstack([box_corners(alg), rng.uniform(-1.0, 1.0, (samples, alg.n))])
    sphere_pts = np.vstack([_axis_points(rho), sample_sphere(rho, samples, rng)])

    def box_inside_ball(r):
        return bool(np.all(rho(ca.dilate(alg, r, box_pts)) <= 1.0))

    def ball_inside_box(r):
        return bool(np.all(np.abs(sphere_pts) <= float(r) ** alg.ord + 1e-15))

    r1, _ = _bisect(box_inside_ball, 0.0, 1.0, tol)
    hi = 1.0
    while not ball_inside_box(hi):
        hi *= 2.0
    _, r2 = _bisect(lambda r: not ball_inside_box(r), 0.0, hi, tol)
    return r1, r2


def norm_from_json(doc, alg: StratifiedAlgebra, seed: int = 0) -> HomogeneousNorm:
    """``{kind: "koranyi"|"power", lambda, C}``; missing fields take defaults."""
    if doc is None:
        doc = {"kind": "koranyi" if alg.k == 2 and alg.layer_dims[1] == 1 else "power"}
    if isinstance(doc, str):
        doc = {"kind": doc}
    if not isinstance(doc, dict) or "kind" not in doc:
        raise MalformedInputError("norm spec must be an object with a 'kind' field")
    try:
        lam = float(doc.get("lambda") or 0.0)
        C = tuple(float(c) for c in doc.get("C") or ())
    except (TypeError, ValueError) as exc:
        raise MalformedInputError(f"malformed norm spec: {exc}") from exc
    return HomogeneousNorm(alg, kind=str(doc["kind"]), lam=lam, C=C, seed=seed)
