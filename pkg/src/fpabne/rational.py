"""Conversion helpers between rationals, floats and text."""

from __future__ import annotations

from decimal import Decimal, InvalidOperation
from fractions import Fraction
from numbers import Rational

from .errors import DomainError


def as_fraction(x) -> Fraction:
    """Exact rational value of ``x``.

    Accepts ints, Fractions, floats (converted exactly), and strings such as
    ``"3/10"``, ``"0.25"`` or ``"1e-6"``.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise DomainError("booleans are not numbers here")
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, float):
        if x != x or x in (float("inf"), float("-inf")):
            raise DomainError(f"non-finite value {x}")
        return Fraction(x)
    if isinstance(x, str):
        text = x.strip()
        try:
            if "/" in text:
                return Fraction(text)
            return Fraction(Decimal(text))
        except (ValueError, ZeroDivisionError, InvalidOperation) as exc:
            raise DomainError(f"cannot parse {x!r} as a rational") from exc
    try:
        return Fraction(float(x))
    except (TypeError, ValueError) as exc:
        raise DomainError(f"cannot convert {x!r} to a rational") from exc


def fraction_text(x) -> str:
    """Canonical ``num/den`` text for a rational (or exactly-converted float)."""
    q = as_fraction(x)
    return f"{q.numerator}/{q.denominator}"


def clamp(x, lo, hi):
    """Truncate ``x`` into ``[lo, hi]`` (assumes lo <= hi)."""
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x
