"""Piecewise-polynomial CDFs on [0, 1] with exact rational coefficients.

A prior is stored as breakpoints ``0 = x_0 < ... < x_K = 1`` and, per piece,
coefficients ``(a_0, ..., a_d)`` of a polynomial in the global coordinate, so
that ``F(z) = sum_k a_k z**k`` for ``z`` in ``[x_{l-1}, x_l]``.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from numbers import Rational
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, StructureError
from .rational import as_fraction

__all__ = [
    "PiecewiseCdf",
    "Violation",
    "ValidationReport",
    "cdf_eval",
    "validate_cdf",
    "lipschitz_bound",
    "continuity_delta",
    "poly_eval",
]


def poly_eval(coeffs: Sequence, z):
    """Horner evaluation of ``sum_k coeffs[k] * z**k``."""
    acc = 0 * z
    for c in reversed(coeffs):
        acc = acc * z + c
    return acc


def _derivative(coeffs: Sequence[Fraction]) -> list[Fraction]:
    return [k * coeffs[k] for k in range(1, len(coeffs))]


def _trim(coeffs: Sequence[Fraction]) -> tuple[Fraction, ...]:
    out = list(coeffs)
    while len(out) > 1 and out[-1] == 0:
        out.pop()
    return tuple(out)


@dataclass(frozen=True)
class PiecewiseCdf:
    """A CDF on [0, 1] given piecewise by polynomials.

    Construction checks only the shape of the data. Probabilistic conditions
    (normalization, continuity, monotonicity) are checked by
    :func:`validate_cdf`, so that invalid inputs can be reported rather than
    rejected outright.
    """

    breakpoints: tuple[Fraction, ...]
    coefficients: tuple[tuple[Fraction, ...], ...]

    def __post_init__(self) -> None:
        bps = tuple(as_fraction(x) for x in self.breakpoints)
        coeffs = tuple(_trim([as_fraction(c) for c in piece]) for piece in self.coefficients)
        if len(bps) < 2:
            raise StructureError("a CDF needs at least one piece")
        if bps[0] != 0 or bps[-1] != 1:
            raise StructureError("breakpoints must start at 0 and end at 1")
        if any(a >= b for a, b in zip(bps, bps[1:])):
            raise StructureError("breakpoints must be strictly increasing")
        if len(coeffs) != len(bps) - 1:
            raise StructureError(
                f"{len(bps) - 1} intervals but {len(coeffs)} coefficient vectors"
            )
        if any(len(piece) == 0 for piece in coeffs):
            raise StructureError("every piece needs at least one coefficient")
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "coefficients", coeffs)

    # -- constructors -----------------------------------------------------

    @classmethod
    def from_pieces(cls, pieces: Iterable[tuple[tuple, Sequence]]) -> "PiecewiseCdf":
        """Build from ``[((lo, hi), coeffs), ...]`` covering [0, 1] contiguously."""
        pieces = [((as_fraction(lo), as_fraction(hi)), coeffs) for (lo, hi), coeffs in pieces]
        if not pieces:
            raise StructureError("empty piece list")
        bps = [pieces[0][0][0]]
        for (lo, hi), _ in pieces:
            if lo != bps[-1]:
                raise StructureError(f"piece starting at {lo} does not continue from {bps[-1]}")
            bps.append(hi)
        return cls(tuple(bps), tuple(tuple(c) for _, c in pieces))

    @classmethod
    def from_blocks(cls, blocks: Iterable[tuple[tuple, object]]) -> "PiecewiseCdf":
        """Build a piecewise-constant-density CDF from ``((lo, hi), volume)`` blocks.

        Gaps between blocks get zero density. Blocks must not overlap.
        """
        items = sorted(
            ((as_fraction(lo), as_fraction(hi)), as_fraction(vol)) for (lo, hi), vol in blocks
        )
        bps: list[Fraction] = [Fraction(0)]
        coeffs: list[tuple[Fraction, ...]] = []
        mass = Fraction(0)
        for (lo, hi), vol in items:
            if not (0 <= lo < hi <= 1):
                raise StructureError(f"block [{lo}, {hi}] is not a sub-interval of [0, 1]")
            if vol < 0:
                raise StructureError(f"block [{lo}, {hi}] has negative volume")
            if lo < bps[-1]:
                raise StructureError(f"block [{lo}, {hi}] overlaps its predecessor")
            if lo > bps[-1]:
                bps.append(lo)
                coeffs.append((mass,))
            h = vol / (hi - lo)
            coeffs.append((mass - h * lo, h))
            bps.append(hi)
            mass += vol
        if bps[-1] < 1:
            bps.append(Fraction(1))
            coeffs.append((mass,))
        return cls(tuple(bps), tuple(coeffs))

    @classmethod
    def uniform(cls) -> "PiecewiseCdf":
        return cls((Fraction(0), Fraction(1)), ((Fraction(0), Fraction(1)),))

    # -- accessors --------------------------------------------------------

    @property
    def num_pieces(self) -> int:
        return len(self.coefficients)

    @property
    def degree(self) -> int:
        return max(len(c) for c in self.coefficients) - 1

    def piece_index(self, x) -> int:
        """Index of a piece whose closed interval contains ``x``."""
        idx = bisect.bisect_right(self.breakpoints, x) - 1
        return min(max(idx, 0), self.num_pieces - 1)

    def piece(self, idx: int) -> tuple[Fraction, Fraction, tuple[Fraction, ...]]:
        return self.breakpoints[idx], self.breakpoints[idx + 1], self.coefficients[idx]

    @cached_property
    def float_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Breakpoints and a dense (K, d+1) coefficient array in float64."""
        bps = np.array([float(x) for x in self.breakpoints])
        width = self.degree + 1
        table = np.zeros((self.num_pieces, width))
        for row, piece in enumerate(self.coefficients):
            table[row, : len(piece)] = [float(c) for c in piece]
        return bps, table

    def __call__(self, x):
        return cdf_eval(self, x)

    def eval_many(self, xs: np.ndarray) -> np.ndarray:
        """Vectorized float evaluation; inputs are clipped to [0, 1]."""
        bps, table = self.float_table
        xs = np.clip(np.asarray(xs, dtype=float), 0.0, 1.0)
        idx = np.clip(np.searchsorted(bps, xs, side="right") - 1, 0, self.num_pieces - 1)
        acc = np.zeros_like(xs)
        for k in range(table.shape[1] - 1, -1, -1):
            acc = acc * xs + table[idx, k]
        return acc


def cdf_eval(F: PiecewiseCdf, x, exact: bool | None = None):
    """Evaluate ``F`` at ``x``.

    Rational inputs give an exact :class:`Fraction` unless ``exact=False``;
    float inputs give a float unless ``exact=True``.
    """
    if exact is None:
        exact = isinstance(x, Rational)
    if exact:
        x = as_fraction(x)
    if not 0 <= x <= 1:
        raise DomainError(f"CDF argument {x} outside [0, 1]")
    coeffs = F.coefficients[F.piece_index(x)]
    # Floats are exact binary rationals: evaluate exactly, round once.
    value = poly_eval(coeffs, as_fraction(x))
    return value if exact else float(value)


# -- validation -------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    piece: int  # 1-based piece index
    kind: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(v.message for v in self.violations)


def _nonnegative_on(p: Sequence[Fraction], a: Fraction, b: Fraction) -> bool:
    """Exact test that the polynomial ``p`` is >= 0 on ``[a, b]``.

    The sign of ``p`` can only change at roots of odd multiplicity. If none
    lies strictly inside ``(a, b)`` the sign is constant there, and sampling
    ``deg + 1`` points (at least one of them not a root) decides it.
    """
    p = _trim(p)
    if poly_eval(p, a) < 0 or poly_eval(p, b) < 0:
        return False
    if len(p) <= 2:
        return True  # affine: endpoints decide
    import sympy

    z = sympy.Symbol("z")
    expr = sum(sympy.Rational(c.numerator, c.denominator) * z**k for k, c in enumerate(p))
    lo_s = sympy.Rational(a.numerator, a.denominator)
    hi_s = sympy.Rational(b.numerator, b.denominator)
    _, factors = sympy.Poly(expr, z, domain="QQ").sqf_list()
    for f, mult in factors:
        if mult % 2 == 0 or f.degree() < 1:
            continue
        inside = f.count_roots(lo_s, hi_s) - (f.eval(lo_s) == 0) - (f.eval(hi_s) == 0)
        if inside > 0:
            return False
    d = len(p)
    return all(poly_eval(p, a + (b - a) * Fraction(t, d + 1)) >= 0 for t in range(1, d + 1))


def validate_cdf(F: PiecewiseCdf) -> ValidationReport:
    """Report every violated CDF condition, with 1-based piece indices."""
    out: list[Violation] = []
    f0 = poly_eval(F.coefficients[0], Fraction(0))
    if f0 < 0:
        out.append(Violation(1, "negative-start", f"F(0) = {f0} < 0 on piece 1"))
    last = F.num_pieces
    f1 = poly_eval(F.coefficients[-1], Fraction(1))
    if f1 != 1:
        out.append(Violation(last, "normalization", f"F(1) = {f1} ≠ 1"))
    for idx in range(1, F.num_pieces):
        x = F.breakpoints[idx]
        left = poly_eval(F.coefficients[idx - 1], x)
        right = poly_eval(F.coefficients[idx], x)
        if left != right:
            out.append(
                Violation(
                    idx + 1,
                    "continuity",
                    f"continuity gap at x = {x} between pieces {idx} and {idx + 1}: {left} vs {right}",
                )
            )
    for idx, coeffs in enumerate(F.coefficients):
        a, b = F.breakpoints[idx], F.breakpoints[idx + 1]
        if not _nonnegative_on(_derivative(coeffs) or [Fraction(0)], a, b):
            out.append(Violation(idx + 1, "decreasing", f"decreasing on piece {idx + 1}"))
    return ValidationReport(tuple(out))


# -- continuity moduli -------------------------------------------------------


def lipschitz_bound(F: PiecewiseCdf) -> Fraction:
    """Max over pieces of ``sum_k k*|a_k|``: a Lipschitz constant on [0, 1]."""
    return max(
        sum((k * abs(c) for k, c in enumerate(coeffs)), Fraction(0)) for coeffs in F.coefficients
    )


def continuity_delta(instance, eps) -> Fraction:
    """Jump-point perturbation radius keeping every interim utility within ``eps``.

    Every CDF value then moves by at most ``eps / 2**(n+1)``; summing over the
    binomial expansion of the win probability gives the ``eps`` bound.
    """
    eps = as_fraction(eps)
    if eps <= 0:
        raise DomainError("eps must be positive")
    n = instance.n
    lmax = max(
        (lipschitz_bound(F) for F in instance.distinct_priors()),
        default=Fraction(0),
    )
    if lmax == 0:
        return Fraction(1)
    return min(Fraction(1), eps / (2 ** (n + 1) * lmax))
