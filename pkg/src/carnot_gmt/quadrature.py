"""Deterministic integration over boxes, chart domains and level curves.

The adaptive rule compares a Gauss-Legendre tensor rule on each cell with
the same rule on its ``2^d`` children and refines the cells carrying the
largest discrepancy.  Cells cut by a region indicator are refined like any
other; the ones left cut when refinement stops are finally evaluated with a
uniform sub-grid so that the region enters through its sampled area
fraction.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import IntegrandError

TOL_CELL = 1e-6
DEPTH_CAP = 18
GAUSS_ORDER = 4
MAX_EVALS = 400_000
MC_SAMPLES = 1_000_000
_CHUNK = 1 << 16
# error floor of a cut cell, as a fraction of its volume times max |f|
CUT_WEIGHT = 0.05


@dataclass(frozen=True)
class QuadratureEstimate:
    value: float
    error_estimate: float
    evaluations: int
    method: str
    seed: Optional[int] = None

    def __add__(self, other: "QuadratureEstimate") -> "QuadratureEstimate":
        method = self.method if self.method == other.method else "mixed"
        return QuadratureEstimate(
            self.value + other.value,
            self.error_estimate + other.error_estimate,
            self.evaluations + other.evaluations,
            method,
            self.seed if self.seed is not None else other.seed,
        )

    def scaled(self, c: float) -> "QuadratureEstimate":
        return QuadratureEstimate(c * self.value, abs(c) * self.error_estimate, self.evaluations, self.method, self.seed)


ZERO = QuadratureEstimate(0.0, 0.0, 0, "adaptive-subdivision")


def total(estimates) -> QuadratureEstimate:
    estimates = list(estimates)
    if not estimates:
        return ZERO
    values = math.fsum(e.value for e in estimates)
    errors = math.fsum(e.error_estimate for e in estimates)
    evals = sum(e.evaluations for e in estimates)
    methods = {e.method for e in estimates}
    seed = next((e.seed for e in estimates if e.seed is not None), None)
    return QuadratureEstimate(values, errors, evals, methods.pop() if len(methods) == 1 else "mixed", seed)


@dataclass(frozen=True)
class QuadratureConfig:
    tol_cell: float = TOL_CELL
    depth_cap: int = DEPTH_CAP
    order: int = GAUSS_ORDER
    max_evals: int = MAX_EVALS
    method: str = "adaptive"
    seed: int = 0
    mc_samples: int = MC_SAMPLES


DEFAULT = QuadratureConfig()


def _tensor_rule(order: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    x, w = 0.5 * (x + 1.0), 0.5 * w
    mesh = np.meshgrid(*([x] * d), indexing="ij")
    wmesh = np.meshgrid(*([w] * d), indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    weights = np.prod(np.stack([m.ravel() for m in wmesh], axis=-1), axis=-1)
    return nodes, weights


def _children_offsets(d: int) -> np.ndarray:
    return np.array(np.meshgrid(*([[0.0, 0.5]] * d), indexing="ij")).reshape(d, -1).T


def _midpoints(q: int, d: int) -> np.ndarray:
    t = (np.arange(q) + 0.5) / q
    return np.stack([m.ravel() for m in np.meshgrid(*([t] * d), indexing="ij")], axis=-1)


class _Evaluator:
    """Evaluates ``f * 1_region`` at batches of points, counting calls."""

    def __init__(self, f, region):
        self.f = f
        self.region = region
        self.evaluations = 0
        self.bad = 0

    def __call__(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        inside = np.ones(len(pts), bool) if self.region is None else np.asarray(self.region(pts), bool)
        vals = np.zeros(len(pts))
        if inside.any():
            sub = pts[inside]
            out = np.empty(len(sub))
            for s in range(0, len(sub), _CHUNK):
                out[s : s + _CHUNK] = np.asarray(self.f(sub[s : s + _CHUNK]), float).reshape(-1)
            self.evaluations += len(sub)
            bad = ~np.isfinite(out)
            if bad.any():
                self.bad += int(bad.sum())
                out[bad] = 0.0
            vals[inside] = out
        return vals, inside


def _check_bad(ev: _Evaluator) -> None:
    if ev.bad and ev.bad > 1e-3 * max(ev.evaluations, 1):
        raise IntegrandError(f"integrand non-finite at {ev.bad} of {ev.evaluations} nodes")


def integrate_box(
    f: Callable[[np.ndarray], np.ndarray],
    lo,
    hi,
    region: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    config: QuadratureConfig = DEFAULT,
) -> QuadratureEstimate:
    """Integrate ``f`` over the box ``[lo, hi]`` restricted to ``region``.

    Dispatches on ``config.method``: ``adaptive``, ``grid`` or ``mc``.
    """
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    if np.any(hi < lo):
        raise ValueError("box with hi < lo")
    if np.any(hi == lo):
        return QuadratureEstimate(0.0, 0.0, 1, "adaptive-subdivision")
    if config.method == "mc":
        return integrate_box_mc(f, lo, hi, region, config.mc_samples, config.seed)
    if config.method == "grid":
        return integrate_box_grid(f, lo, hi, region, order=config.order)
    return integrate_box_adaptive(f, lo, hi, region, config)


def integrate_box_adaptive(f, lo, hi, region=None, config: QuadratureConfig = DEFAULT) -> QuadratureEstimate:
    d = len(lo)
    order = config.order if d <= 2 else min(config.order, 3)
    nodes, weights = _tensor_rule(order, d)
    offsets = _children_offsets(d)
    corners = offsets * 2.0
    fine_nodes = (nodes[None, :, :] * 0.5 + offsets[:, None, :]).reshape(-1, d)
    fine_weights = np.tile(weights / len(offsets), len(offsets))
    ref = np.vstack([nodes, fine_nodes])
    nc = len(nodes)
    ev = _Evaluator(f, region)

    def evaluate(clo, chi):
        m = len(clo)
        size = chi - clo
        pts = (clo[:, None, :] + size[:, None, :] * ref[None, :, :]).reshape(-1, d)
        vals, inside = ev(pts)
        vals = vals.reshape(m, -1)
        inside = inside.reshape(m, -1)
        vol = np.prod(size, axis=-1)
        coarse = vol * (vals[:, :nc] @ weights)
        fine = vol * (vals[:, nc:] @ fine_weights)
        err = np.abs(fine - coarse)
        if region is None:
            return coarse, fine, err, np.zeros(m, bool)
        # corners catch boundaries that slip between the interior nodes
        cpts = (clo[:, None, :] + size[:, None, :] * corners[None, :, :]).reshape(-1, d)
        cin = np.asarray(region(cpts), bool).reshape(m, -1)
        cut = (inside.any(axis=1) | cin.any(axis=1)) & ~(inside.all(axis=1) & cin.all(axis=1))
        floor = CUT_WEIGHT * vol * np.max(np.abs(vals), axis=1, initial=0.0)
        # a cut cell whose nodes all miss the region still carries some mass
        floor = np.where(floor > 0, floor, CUT_WEIGHT * np.abs(fine))
        err = np.where(cut, np.maximum(err, floor), err)
        return coarse, fine, err, cut

    init = {1: 8, 2: 4}.get(d, 2)
    grid = np.stack(
        [g.ravel() for g in np.meshgrid(*([np.arange(init)] * d), indexing="ij")], axis=-1
    ).astype(float)
    step = (hi - lo) / init
    clo = lo + grid * step
    chi = clo + step
    depth = np.zeros(len(clo), int)
    _, I2, err, cut = evaluate(clo, chi)
    per_cell = len(ref)
    while True:
        tot, tot_err = math.fsum(I2), math.fsum(err)
        if tot_err <= config.tol_cell * abs(tot) or tot_err == 0:
            break
        cand = np.flatnonzero((depth < config.depth_cap) & (err > 0))
        if cand.size == 0 or ev.evaluations >= config.max_evals:
            break
        ranked = cand[np.argsort(-err[cand], kind="stable")]
        cum = np.cumsum(err[ranked])
        take = int(np.searchsorted(cum, 0.5 * tot_err)) + 1
        budget = max(1, (config.max_evals - ev.evaluations) // (per_cell * len(offsets)))
        chosen = ranked[: max(1, min(take, budget))]
        keep = np.ones(len(clo), bool)
        keep[chosen] = False
        half = 0.5 * (chi[chosen] - clo[chosen])
        nlo = (clo[chosen][:, None, :] + offsets[None, :, :] * 2 * half[:, None, :]).reshape(-1, d)
        nhi = nlo + np.repeat(half, len(offsets), axis=0)
        ndepth = np.repeat(depth[chosen] + 1, len(offsets))
        _, nI2, nerr, ncut = evaluate(nlo, nhi)
        clo = np.vstack([clo[keep], nlo])
        chi = np.vstack([chi[keep], nhi])
        depth = np.concatenate([depth[keep], ndepth])
        I2 = np.concatenate([I2[keep], nI2])
        err = np.concatenate([err[keep], nerr])
        cut = np.concatenate([cut[keep], ncut])
    if region is not None and cut.any():
        q = 8 if d <= 2 else 4
        sub = _midpoints(q, d)
        idx = np.flatnonzero(cut)
        size = chi[idx] - clo[idx]
        pts = (clo[idx][:, None, :] + size[:, None, :] * sub[None, :, :]).reshape(-1, d)
        vals, _ = ev(pts)
        frac_val = np.prod(size, axis=-1) * vals.reshape(len(idx), -1).mean(axis=1)
        err[idx] = np.maximum(err[idx], np.abs(frac_val - I2[idx]))
        I2[idx] = frac_val
    _check_bad(ev)
    return QuadratureEstimate(math.fsum(I2), math.fsum(err), max(ev.evaluations, 1), "adaptive-subdivision")


def integrate_box_grid(f, lo, hi, region=None, cells: int = 16, order: int = GAUSS_ORDER) -> QuadratureEstimate:
    """Fixed tensor grid; error is the change from ``cells/2`` to ``cells``."""
    d = len(lo)
    ev = _Evaluator(f, region)

    def rule(m):
        nodes, weights = _tensor_rule(order, d)
        idx = np.stack([g.ravel() for g in np.meshgrid(*([np.arange(m)] * d), indexing="ij")], axis=-1)
        size = (hi - lo) / m
        pts = (lo + idx[:, None, :] * size + nodes[None, :, :] * size).reshape(-1, d)
        vals, _ = ev(pts)
        return float(np.prod(size)) * math.fsum(vals.reshape(len(idx), -1) @ weights)

    coarse, fine = rule(max(cells // 2, 1)), rule(cells)
    _check_bad(ev)
    return QuadratureEstimate(fine, abs(fine - coarse), max(ev.evaluations, 1), "tensor-grid")


def integrate_box_mc(f, lo, hi, region=None, samples: int = MC_SAMPLES, seed: int = 0) -> QuadratureEstimate:
    """Uniform Monte Carlo with a seeded PCG64 stream; error is one standard error."""
    d = len(lo)
    rng = np.random.default_rng(seed)
    ev = _Evaluator(f, region)
    s1, s2, done = 0.0, 0.0, 0
    while done < samples:
        m = min(_CHUNK, samples - done)
        pts = lo + (hi - lo) * rng.random((m, d))
        vals, _ = ev(pts)
        s1 += math.fsum(vals)
        s2 += math.fsum(vals * vals)
        done += m
    _check_bad(ev)
    vol = float(np.prod(hi - lo))
    mean = s1 / samples
    var = max(s2 / samples - mean * mean, 0.0)
    return QuadratureEstimate(vol * mean, vol * math.sqrt(var / samples), samples, "monte-carlo", seed)


def integrate_chart(chart, density, region=None, config: QuadratureConfig = DEFAULT, box=None) -> QuadratureEstimate:
    """Integrate a density in chart parameters; ``box`` restricts the domain."""
    lo, hi = (chart.lo, chart.hi) if box is None else box
    lo = np.maximum(np.asarray(lo, float), chart.lo)
    hi = np.minimum(np.asarray(hi, float), chart.hi)
    if np.any(hi <= lo):
        return QuadratureEstimate(0.0, 0.0, 1, "adaptive-subdivision")
    return integrate_box(density, lo, hi, region, config)


def integrate_curve(curve, density, region=None, config: QuadratureConfig = DEFAULT) -> QuadratureEstimate:
    return integrate_box(density, np.asarray(curve.lo, float), np.asarray(curve.hi, float), region, config)


_LINE_NODES, _LINE_WEIGHTS = np.polynomial.legendre.leggauss(3)


def integrate_polylines(polylines, density) -> QuadratureEstimate:
    """Three-point Gauss rule on every segment of every polyline.

    ``density(U, dU)`` receives segment points and segment vectors in chart
    coordinates and returns the line density times the Euclidean-to-
    intrinsic length factor per unit parameter.  The error estimate is the
    difference to the one-point (midpoint) rule.
    """
    segs_a, segs_b = [], []
    for line in polylines:
        line = np.asarray(line, float)
        if len(line) < 2:
            continue
        segs_a.append(line[:-1])
        segs_b.append(line[1:])
    if not segs_a:
        return QuadratureEstimate(0.0, 0.0, 1, "polyline-gauss")
    a, b = np.vstack(segs_a), np.vstack(segs_b)
    dU = b - a
    t = 0.5 * (_LINE_NODES + 1.0)
    pts = a[:, None, :] + t[None, :, None] * dU[:, None, :]
    vals = np.asarray(density(pts.reshape(-1, a.shape[1]), np.repeat(dU, len(t), axis=0)), float)
    vals = vals.reshape(len(a), len(t))
    gauss = vals @ (0.5 * _LINE_WEIGHTS)
    mid = np.asarray(density(0.5 * (a + b), dU), float)
    value = math.fsum(gauss)
    return QuadratureEstimate(value, abs(value - math.fsum(mid)), int(vals.size + mid.size), "polyline-gauss")


def hyperplane_basis(alg, direction) -> np.ndarray:
    """Orthonormal coordinate basis (columns) of the vertical hyperplane
    ``{<y_H, direction> = 0}``: the horizontal complement of ``direction``
    followed by all vertical coordinate axes."""
    v = np.asarray(direction, float)
    if v.shape != (alg.h,) or not np.isclose(np.linalg.norm(v), 1.0, atol=1e-10):
        raise ValueError("direction must be a unit horizontal vector")
    Qm, _ = np.linalg.qr(np.column_stack([v, np.eye(alg.h)]), mode="complete")
    horiz = Qm[:, 1 : alg.h]
    B = np.zeros((alg.n, alg.n - 1))
    B[: alg.h, : alg.h - 1] = horiz
    B[alg.h :, alg.h - 1 :] = np.eye(alg.n - alg.h)
    return B


def integrate_vertical_hyperplane(alg, rho, direction, config: QuadratureConfig = DEFAULT) -> QuadratureEstimate:
    """Euclidean ``(n-1)``-measure of ``I(direction) ∩ B_rho(0, 1)``.

    The parameter box uses ``|y_H| <= 1`` and ``|y_j| <= r_2^ord(j)``.
    """
    B = hyperplane_basis(alg, direction)
    _, r2 = rho.radii
    half = np.concatenate([np.ones(alg.h - 1), r2 ** alg.ord[alg.h :].astype(float)])

    def region(U):
        return rho(U @ B.T) < 1.0

    return integrate_box(lambda U: np.ones(len(U)), -half, half, region, config)


def worker_count() -> int:
    """Worker cap from ``CARNOT_GMT_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("CARNOT_GMT_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn, items) -> list:
    """``[fn(i) for i in items]`` on up to ``worker_count()`` threads; the
    result order is the input order."""
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
