"""Sparse multivariate polynomials with rational coefficients.

Terms are stored as ``{exponent tuple: Fraction}`` over a fixed number of
variables. Only what the equilibrium systems need is provided: ring
operations, exact and float evaluation, degree, and compilation into numpy
arrays for fast repeated evaluation.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .rational import as_fraction

__all__ = ["Poly", "CompiledPolys"]


class Poly:
    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: Mapping[tuple, Fraction] | None = None):
        self.nvars = nvars
        self.terms = {e: c for e, c in (terms or {}).items() if c != 0}

    @classmethod
    def const(cls, nvars: int, c) -> "Poly":
        return cls(nvars, {(0,) * nvars: as_fraction(c)})

    @classmethod
    def var(cls, nvars: int, idx: int) -> "Poly":
        e = [0] * nvars
        e[idx] = 1
        return cls(nvars, {tuple(e): Fraction(1)})

    @classmethod
    def univariate(cls, nvars: int, idx: int, coeffs: Sequence) -> "Poly":
        """``sum_k coeffs[k] * x_idx**k``."""
        terms = {}
        for k, c in enumerate(coeffs):
            e = [0] * nvars
            e[idx] = k
            terms[tuple(e)] = as_fraction(c)
        return cls(nvars, terms)

    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            return other
        return Poly.const(self.nvars, other)

    def __add__(self, other) -> "Poly":
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0) + c
        return Poly(self.nvars, out)

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other) -> "Poly":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Poly":
        return self._coerce(other) - self

    def __mul__(self, other) -> "Poly":
        if not isinstance(other, Poly):
            c = as_fraction(other)
            return Poly(self.nvars, {e: v * c for e, v in self.terms.items()})
        out: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0) + c1 * c2
        return Poly(self.nvars, out)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, Poly):
            other = self._coerce(other)
        return self.nvars == other.nvars and self.terms == other.terms

    def __hash__(self):  # pragma: no cover - mutable-looking but never mutated
        return hash((self.nvars, frozenset(self.terms.items())))

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def variables(self) -> set[int]:
        return {i for e in self.terms for i, k in enumerate(e) if k}

    def is_zero(self) -> bool:
        return not self.terms

    def __call__(self, point: Sequence):
        """Exact for rational points, float otherwise."""
        exact = all(isinstance(x, (int, Fraction)) for x in point)
        total = Fraction(0) if exact else 0.0
        for e, c in self.terms.items():
            term = c if exact else float(c)
            for x, k in zip(point, e):
                if k:
                    term = term * x**k
            total = total + term
        return total

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for e, c in sorted(self.terms.items(), reverse=True):
            mono = "*".join(f"x{i}" + (f"^{k}" if k > 1 else "") for i, k in enumerate(e) if k)
            parts.append(f"{c}" + (f"*{mono}" if mono else ""))
        return " + ".join(parts)


class CompiledPolys:
    """A list of polynomials packed for vectorized float evaluation."""

    def __init__(self, polys: Sequence[Poly], nvars: int):
        self.count = len(polys)
        rows, exps, coeffs = [], [], []
        for r, p in enumerate(polys):
            for e, c in p.terms.items():
                rows.append(r)
                exps.append(e)
                coeffs.append(float(c))
        self.rows = np.array(rows, dtype=int)
        self.exps = np.array(exps, dtype=float).reshape(len(exps), nvars)
        self.coeffs = np.array(coeffs)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(self.count)
        if len(self.coeffs):
            vals = self.coeffs * np.prod(np.power(x[None, :], self.exps), axis=1) if self.exps.shape[1] else self.coeffs
            np.add.at(out, self.rows, vals)
        return out
