"""Stratified Lie algebras in exponential coordinates of the first kind.

The group law is the Baker-Campbell-Hausdorff polynomial truncated at
bracket length four, which is exact for nilpotent algebras of step at most
four.  All point-wise operations broadcast over leading array axes, so a
batch of ``m`` points is an ``(m, n)`` array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import bernoulli

from .errors import MalformedInputError, StructureError, UnsupportedStepError

MAX_BCH_STEP = 4


@dataclass(frozen=True)
class StratifiedAlgebra:
    """Graded nilpotent Lie algebra with an adapted orthonormal basis.

    Parameters
    ----------
    layer_dims : tuple of int
        Dimensions ``h_1, ..., h_k`` of the layers.
    entries : mapping
        Sparse structure constants ``{(i, j, r): C^r_ij}`` with 0-based
        indices, stored as exact fractions.
    name : str
        Catalog label.
    """

    layer_dims: tuple[int, ...]
    entries: Mapping[tuple[int, int, int], Fraction]
    name: str = ""
    n: int = field(init=False)
    k: int = field(init=False)
    Q: int = field(init=False)
    ord: np.ndarray = field(init=False, repr=False)
    C: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        dims = tuple(int(h) for h in self.layer_dims)
        if not dims or any(h <= 0 for h in dims):
            raise StructureError(f"layer dimensions must be positive, got {dims}")
        n = sum(dims)
        for (i, j, r), _ in self.entries.items():
            if not all(0 <= a < n for a in (i, j, r)):
                raise StructureError(f"bracket index {(i + 1, j + 1, r + 1)} outside 1..{n}")
        order = np.concatenate([np.full(h, layer + 1) for layer, h in enumerate(dims)])
        tensor = np.zeros((n, n, n))
        for (i, j, r), value in self.entries.items():
            tensor[i, j, r] = float(value)
        tensor.setflags(write=False)
        order.setflags(write=False)
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "entries", dict(self.entries))
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "k", len(dims))
        object.__setattr__(self, "Q", int(sum((i + 1) * h for i, h in enumerate(dims))))
        object.__setattr__(self, "ord", order)
        object.__setattr__(self, "C", tensor)

    @property
    def h(self) -> int:
        """Dimension of the horizontal layer."""
        return self.layer_dims[0]

    def layer_slice(self, layer: int) -> slice:
        """Coordinate slice of layer ``layer`` (1-based)."""
        start = sum(self.layer_dims[: layer - 1])
        return slice(start, start + self.layer_dims[layer - 1])

    def structure_matrix(self, r: int) -> np.ndarray:
        """Horizontal block ``[C^r_ij]_{i,j<=h}`` for 0-based index ``r``."""
        return np.array(self.C[: self.h, : self.h, r])

    @classmethod
    def from_brackets(
        cls,
        layer_dims: Sequence[int],
        brackets: Iterable[Sequence],
        name: str = "",
        complete: bool = True,
    ) -> "StratifiedAlgebra":
        """Build from ``[i, j, r, value]`` rows with 1-based indices.

        With ``complete`` the antisymmetric partner ``C^r_ji = -C^r_ij`` is
        filled in unless it is listed explicitly.
        """
        entries: dict[tuple[int, int, int], Fraction] = {}
        for row in brackets:
            if len(row) != 4:
                raise StructureError(f"bracket row must have 4 entries, got {row!r}")
            i, j, r = (_as_index(v) for v in row[:3])
            entries[(i - 1, j - 1, r - 1)] = _as_fraction(row[3])
        if complete:
            for (i, j, r), value in list(entries.items()):
                entries.setdefault((j, i, r), -value)
        entries = {key: v for key, v in entries.items() if v != 0}
        return cls(tuple(layer_dims), entries, name)


@dataclass(frozen=True)
class ValidationReport:
    antisymmetry_residual: float
    jacobi_residual: float
    grading_violations: list
    bracket_generating: tuple[bool, ...]
    antisymmetry_violations: list = field(default_factory=list)
    jacobi_violations: list = field(default_factory=list)

    @property
    def all_pass(self) -> bool:
        return (
            self.antisymmetry_residual == 0
            and self.jacobi_residual == 0
            and not self.grading_violations
            and all(self.bracket_generating)
        )


def _as_index(value) -> int:
    if isinstance(value, bool) or not float(value).is_integer():
        raise StructureError(f"bracket index must be an integer, got {value!r}")
    return int(value)


def _as_fraction(value) -> Fraction:
    if isinstance(value, bool):
        raise StructureError(f"structure constant {value!r} is not a number")
    try:
        return Fraction(value)
    except (TypeError, ValueError) as exc:
        raise StructureError(f"structure constant {value!r} is not a number") from exc


def _exact_tensor(alg: StratifiedAlgebra) -> list:
    n = alg.n
    T = [[[Fraction(0)] * n for _ in range(n)] for _ in range(n)]
    for (i, j, r), v in alg.entries.items():
        T[i][j][r] = v
    return T


def _exact_rank(rows: list[list[Fraction]]) -> int:
    mat = [list(r) for r in rows if any(r)]
    rank, col = 0, 0
    ncols = len(mat[0]) if mat else 0
    while rank < len(mat) and col < ncols:
        pivot = next((p for p in range(rank, len(mat)) if mat[p][col] != 0), None)
        if pivot is None:
            col += 1
            continue
        mat[rank], mat[pivot] = mat[pivot], mat[rank]
        for p in range(rank + 1, len(mat)):
            factor = mat[p][col] / mat[rank][col]
            if factor:
                mat[p] = [a - factor * b for a, b in zip(mat[p], mat[rank])]
        rank += 1
        col += 1
    return rank


def validate_structure(alg: StratifiedAlgebra) -> ValidationReport:
    """Exact check of antisymmetry, Jacobi, grading and bracket generation.

    Violations are reported with 1-based indices.
    """
    n, order = alg.n, [int(o) for o in alg.ord]
    T = _exact_tensor(alg)
    anti_viol, anti_res = [], Fraction(0)
    for i in range(n):
        for j in range(i, n):
            for r in range(n):
                s = T[i][j][r] + T[j][i][r]
                if s != 0:
                    anti_viol.append((i + 1, j + 1, r + 1))
                    anti_res = max(anti_res, abs(s))
    # product [[e_i, e_j], e_l]
    def bracket_basis(u: list[Fraction], l: int) -> list[Fraction]:
        out = [Fraction(0)] * n
        for m in range(n):
            if u[m]:
                for r in range(n):
                    if T[m][l][r]:
                        out[r] += u[m] * T[m][l][r]
        return out

    jac_viol, jac_res = [], Fraction(0)
    for i in range(n):
        for j in range(n):
            for l in range(n):
                a = bracket_basis(T[i][j], l)
                b = bracket_basis(T[j][l], i)
                c = bracket_basis(T[l][i], j)
                worst = max(abs(a[r] + b[r] + c[r]) for r in range(n))
                if worst != 0:
                    jac_res = max(jac_res, worst)
                    jac_viol.append(tuple(sorted((i + 1, j + 1, l + 1))))
    grading = sorted(
        (i + 1, j + 1, r + 1)
        for (i, j, r), v in alg.entries.items()
        if v != 0 and order[r] != order[i] + order[j]
    )
    generating = [True]
    horiz = range(alg.h)
    for layer in range(2, alg.k + 1):
        prev = [b for b in range(n) if order[b] == layer - 1]
        rows = [T[a][b] for a in horiz for b in prev]
        in_layer = all(v == 0 for row in rows for m, v in enumerate(row) if order[m] != layer)
        generating.append(in_layer and _exact_rank(rows) == alg.layer_dims[layer - 1])
    return ValidationReport(
        antisymmetry_residual=float(anti_res),
        jacobi_residual=float(jac_res),
        grading_violations=grading,
        bracket_generating=tuple(generating),
        antisymmetry_violations=anti_viol,
        jacobi_violations=sorted(set(jac_viol)),
    )


def bracket(alg: StratifiedAlgebra, u, v) -> np.ndarray:
    """Lie bracket ``[u, v]^r = sum C^r_ij u^i v^j`` at the identity."""
    u, v = np.asarray(u, float), np.asarray(v, float)
    return np.einsum("ijr,...i,...j->...r", alg.C, u, v)


def _check_step(alg: StratifiedAlgebra) -> None:
    if alg.k > MAX_BCH_STEP:
        raise UnsupportedStepError(f"BCH truncation supports step <= {MAX_BCH_STEP}, got {alg.k}")


def bch_product(alg: StratifiedAlgebra, x, y) -> np.ndarray:
    """Group product ``x * y`` via Dynkin terms of length 1 to 4."""
    _check_step(alg)
    x, y = np.asarray(x, float), np.asarray(y, float)
    z = x + y
    if alg.k == 1:
        return z
    xy = bracket(alg, x, y)
    z = z + 0.5 * xy
    if alg.k >= 3:
        x_xy = bracket(alg, x, xy)
        z = z + (x_xy - bracket(alg, y, xy)) / 12.0
        if alg.k >= 4:
            z = z - bracket(alg, y, x_xy) / 24.0
    return z


def inverse(alg: StratifiedAlgebra, x) -> np.ndarray:
    """Group inverse, which is ``-x`` in exponential coordinates."""
    return -np.asarray(x, float)


def dilate(alg: StratifiedAlgebra, t, x) -> np.ndarray:
    """Anisotropic dilation scaling coordinate ``i`` by ``t**ord(i)``."""
    t = np.asarray(t, float)
    if np.any(t < 0):
        raise MalformedInputError("dilation factor must be nonnegative")
    return np.asarray(x, float) * np.power(t[..., None], alg.ord)


def ad_matrix(alg: StratifiedAlgebra, x) -> np.ndarray:
    """Matrix of ``ad_x``: column ``j`` holds ``[x, e_j]``."""
    return np.einsum("ijr,...i->...rj", alg.C, np.asarray(x, float))


def _bernoulli_plus(k: int) -> np.ndarray:
    b = np.array(bernoulli(max(k - 1, 1))[:k], float)
    if k > 1:
        b[1] = 0.5
    return b / np.array([math.factorial(m) for m in range(k)], float)


def left_invariant_frame(alg: StratifiedAlgebra, x) -> np.ndarray:
    """Coordinate matrix of the frame at ``x``; column ``i`` is ``X_i(x)``.

    Uses the series ``sum_m (B_m / m!) ad_x^m`` with ``B_1 = +1/2``.
    """
    ad = ad_matrix(alg, x)
    coeff = _bernoulli_plus(alg.k)
    eye = np.broadcast_to(np.eye(alg.n), ad.shape)
    out = coeff[0] * eye
    power = eye
    for m in range(1, alg.k):
        power = power @ ad
        if coeff[m] != 0:
            out = out + coeff[m] * power
    return np.array(out)


def frame_derivatives(alg: StratifiedAlgebra, x) -> np.ndarray:
    """Partial derivatives of the frame matrix, shape ``(..., n, n, n)``.

    Entry ``[..., l, a, i]`` is the derivative of ``X_i(x)^a`` in ``x_l``.
    """
    ad = ad_matrix(alg, x)
    basis = np.transpose(alg.C, (0, 2, 1))  # ad_{e_l}[r, j]
    coeff = _bernoulli_plus(alg.k)
    n = alg.n
    lead = ad.shape[:-2]
    out = np.zeros(lead + (n, n, n))
    powers = [np.broadcast_to(np.eye(n), ad.shape)]
    for m in range(1, alg.k):
        powers.append(powers[-1] @ ad)
    for m in range(1, alg.k):
        if coeff[m] == 0:
            continue
        for a in range(m):
            # ad^a A_l ad^(m-1-a)
            left = powers[a][..., None, :, :]
            right = powers[m - 1 - a][..., None, :, :]
            out = out + coeff[m] * (left @ basis @ right)
    return out


def left_translation_jacobian(alg: StratifiedAlgebra, x, z) -> np.ndarray:
    """Jacobian of ``z -> x * z``; equals the frame at ``x`` when ``z = 0``."""
    _check_step(alg)
    x, z = np.asarray(x, float), np.asarray(z, float)
    ad_x, ad_z = ad_matrix(alg, x), ad_matrix(alg, z)
    eye = np.broadcast_to(np.eye(alg.n), ad_x.shape)
    J = eye + 0.5 * ad_x
    if alg.k >= 3:
        xz = bracket(alg, x, z)
        J = J + (ad_x @ ad_x + ad_matrix(alg, xz) - ad_z @ ad_x) / 12.0
        if alg.k >= 4:
            x_xz = bracket(alg, x, xz)
            J = J - (ad_z @ ad_x @ ad_x - ad_matrix(alg, x_xz)) / 24.0
    return np.array(J)


def to_frame(alg: StratifiedAlgebra, x, v) -> np.ndarray:
    """Frame components at ``x`` of a coordinate vector ``v``."""
    F = left_invariant_frame(alg, x)
    return np.linalg.solve(F, np.asarray(v, float)[..., None])[..., 0]


def homothety_coords(alg: StratifiedAlgebra, x, y) -> np.ndarray:
    """Coordinate components of the homothety field ``Z_x`` at ``y``."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    z = bch_product(alg, inverse(alg, x), y)
    J = left_translation_jacobian(alg, x, z)
    return np.einsum("...ab,...b->...a", J, z * alg.ord)


def homothety_vector(alg: StratifiedAlgebra, x, y) -> np.ndarray:
    """Frame components of ``Z_x(y) = d/dt|_{t=1} x * delta_t(x^{-1} * y)``."""
    return to_frame(alg, y, homothety_coords(alg, x, y))


# ---------------------------------------------------------------- catalog


def heisenberg(n: int = 1) -> StratifiedAlgebra:
    """Heisenberg algebra ``H^n`` with ``[e_{2k-1}, e_{2k}] = e_{2n+1}``."""
    rows = [[2 * k - 1, 2 * k, 2 * n + 1, 1] for k in range(1, n + 1)]
    return StratifiedAlgebra.from_brackets((2 * n, 1), rows, name=f"heisenberg{n}")


def engel() -> StratifiedAlgebra:
    """Engel algebra: ``[X1, X2] = X3``, ``[X1, X3] = X4``."""
    return StratifiedAlgebra.from_brackets((2, 1, 1), [[1, 2, 3, 1], [1, 3, 4, 1]], name="engel")


BUILTIN_GROUPS = {
    "heisenberg1": lambda: heisenberg(1),
    "heisenberg2": lambda: heisenberg(2),
    "engel": engel,
}


def algebra_from_json(doc) -> StratifiedAlgebra:
    """Build an algebra from a catalog name or ``{n, k, layer_dims, brackets}``.

    Bracket indices are 1-based.  Missing antisymmetric partners are filled
    unless ``"complete": false`` is given.
    """
    if isinstance(doc, str):
        if doc not in BUILTIN_GROUPS:
            raise MalformedInputError(f"unknown group {doc!r}; known: {sorted(BUILTIN_GROUPS)}")
        return BUILTIN_GROUPS[doc]()
    if not isinstance(doc, dict):
        raise MalformedInputError("group must be a catalog name or an object")
    try:
        dims = [int(h) for h in doc["layer_dims"]]
        rows = doc.get("brackets", [])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInputError(f"malformed group spec: {exc}") from exc
    if "n" in doc and int(doc["n"]) != sum(dims):
        raise StructureError(f"n = {doc['n']} disagrees with sum(layer_dims) = {sum(dims)}")
    if "k" in doc and int(doc["k"]) != len(dims):
        raise StructureError(f"k = {doc['k']} disagrees with len(layer_dims) = {len(dims)}")
    return StratifiedAlgebra.from_brackets(
        dims, rows, name=str(doc.get("name", "inline")), complete=bool(doc.get("complete", True))
    )
