"""Sparse multivariate polynomials with exact derivatives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Polynomial:
    """``sum_b coef_b x^b`` over ``nvars`` variables.

    ``terms`` maps exponent tuples to coefficients.
    """

    nvars: int
    terms: tuple[tuple[tuple[int, ...], float], ...] = ()

    @classmethod
    def from_dict(cls, nvars: int, terms: dict) -> "Polynomial":
        clean = {}
        for exp, c in terms.items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != nvars or any(e < 0 for e in exp):
                raise ValueError(f"bad exponent {exp} for {nvars} variables")
            if c != 0:
                clean[exp] = clean.get(exp, 0.0) + float(c)
        return cls(nvars, tuple(sorted((e, c) for e, c in clean.items() if c != 0)))

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def weight(self, exp, weights) -> float:
        return float(np.dot(exp, weights))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        out = np.zeros(x.shape[:-1])
        for exp, c in self.terms:
            out = out + c * np.prod(x ** np.array(exp), axis=-1)
        return out

    def derivative(self, var: int) -> "Polynomial":
        new = {}
        for exp, c in self.terms:
            if exp[var] > 0:
                e = list(exp)
                e[var] -= 1
                new[tuple(e)] = new.get(tuple(e), 0.0) + c * exp[var]
        return Polynomial.from_dict(self.nvars, new)

    def gradient(self, x) -> np.ndarray:
        return np.stack([self.derivative(v)(x) for v in range(self.nvars)], axis=-1)

    def hessian(self, x) -> np.ndarray:
        rows = []
        for a in range(self.nvars):
            da = self.derivative(a)
            rows.append(np.stack([da.derivative(b)(x) for b in range(self.nvars)], axis=-1))
        return np.stack(rows, axis=-2)

    def describe(self, names=None) -> str:
        if not self.terms:
            return "0"
        names = names or [f"z{i + 1}" for i in range(self.nvars)]
        parts = []
        for exp, c in self.terms:
            mono = "*".join(
                names[i] if e == 1 else f"{names[i]}^{e}" for i, e in enumerate(exp) if e
            )
            parts.append(f"{c:.12g}" + (f"*{mono}" if mono else ""))
        return " + ".join(parts)
