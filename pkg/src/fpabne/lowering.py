"""Rewriting generalized circuits into small gate sets.

Four target families are supported; each is identified by its native gates:

``PLUS``    {G1-, G+}        approximate; linear gates only
``EXACT``   {G1-, Gx2, Gx}   exact only
``SQUARE``  {G1-, G+, Gsq}   as PLUS for linear gates; products exact only
``PHI``     {Gx2, G1-, Gphi} approximate for eps <= 1/14

Every source gate becomes a gadget whose last gate sits at the source index,
so ``index_map`` is the identity on source gates and gadget internals are
appended after them. A gadget carries an error multiplier ``M``: whenever the
lowered circuit is eps-satisfied, the read-back values satisfy the source
gate within ``M * eps``. ``None`` marks gadgets certified only at eps = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable

from .errors import DomainError, StructureError
from .gcircuit import Gate, GateType, GeneralizedCircuit
from .rational import as_fraction

__all__ = [
    "PLUS",
    "EXACT",
    "SQUARE",
    "PHI",
    "FAMILIES",
    "LoweredCircuit",
    "lower_circuit",
    "lower_gate",
    "family_of",
    "scale_digits",
]

T = GateType

PLUS = frozenset({T.COMPL, T.ADD})
EXACT = frozenset({T.COMPL, T.TIMES2, T.MUL})
SQUARE = frozenset({T.COMPL, T.ADD, T.SQUARE})
PHI = frozenset({T.TIMES2, T.COMPL, T.PHI})

MAX_SCALE_BITS = 64


@dataclass(frozen=True)
class Family:
    name: str
    natives: frozenset
    eps_max: Fraction  # largest eps for which the multipliers hold
    bounds: dict  # gate type -> multiplier (None: exact only)


def _int_scale_bound(k: int, add: int) -> int | None:
    """Error of ``trunc(k x)`` built from doublings and ``add``-accurate sums."""
    if k == 0:
        return 3
    if k == 1:
        return 2
    top = k.bit_length() - 1
    return (2**top - 1) + add * (bin(k).count("1") - 1)


_PLUS_BOUNDS = {
    T.COPY: 2,
    T.ONE: 2,
    T.SUB: 3,
    T.HALF: 5,
    T.SCALE: 23,
    T.TIMES2: 1,
    T.CONST: 25,
    T.MAX: 4,
    T.MIN: 6,
}

_PHI_BOUNDS = {
    T.ONE: 1,
    T.HALF: 3,
    T.COPY: 2,
    T.INV: 8,
    T.SUB: 99,
    T.ADD: 101,
    T.MAX: 200,
    T.MIN: 202,
}

# Most specific first: the square family extends the plus family.
FAMILIES = (
    Family("square", SQUARE, Fraction(1), _PLUS_BOUNDS),
    Family("plus", PLUS, Fraction(1), _PLUS_BOUNDS),
    Family("phi", PHI, Fraction(1, 14), _PHI_BOUNDS),
    Family("exact", EXACT, Fraction(0), {}),
)


def family_of(target: Iterable[GateType]) -> Family:
    target = frozenset(target)
    for fam in FAMILIES:
        if fam.natives <= target:
            return fam
    raise StructureError(
        "target gate set contains none of "
        + ", ".join("{" + ", ".join(sorted(t.label for t in f.natives)) + "}" for f in FAMILIES)
    )


def scale_digits(zeta: Fraction, k: int) -> int:
    """The numerator ``a`` in ``1..2^k-1`` nearest to ``zeta * 2^k``."""
    a = round(zeta * 2**k)
    return min(max(a, 1), 2**k - 1)


def _scale_bits(eps: Fraction) -> int:
    if eps <= 0:
        return MAX_SCALE_BITS
    return min(MAX_SCALE_BITS, max(2, math.ceil(math.log2(1 / eps))))


# -- builder ---------------------------------------------------------------------


class _Builder:
    def __init__(self, natives: frozenset, family: Family, eps: Fraction, keep_types: frozenset):
        self.gates: list[Gate | None] = []
        self.natives = natives
        self.family = family
        self.eps = eps
        self.keep_types = keep_types
        self.notes: list[str] = []

    def reserve(self) -> int:
        self.gates.append(None)
        return len(self.gates) - 1

    def put(self, t: GateType, j=None, k=None, zeta=None, dest=None) -> int:
        gate = Gate(t, j, k, zeta)
        if dest is None:
            self.gates.append(gate)
            return len(self.gates) - 1
        if self.gates[dest] is not None:
            raise StructureError(f"gate slot {dest} defined twice")  # pragma: no cover
        self.gates[dest] = gate
        return dest

    def g(self, t: GateType, *ins, zeta=None, dest=None) -> int:
        """Emit gate ``t`` natively if possible, otherwise via its rule."""
        if t in self.natives:
            padded = list(ins) + [None] * (2 - len(ins))
            return self.put(t, padded[0], padded[1], zeta, dest)
        rule = _rule_for(self.family, t)
        if rule is None:
            raise StructureError(f"{t.label} cannot be lowered to the {self.family.name} gate set")
        return rule(self, ins, zeta, dest)


# -- rules -------------------------------------------------------------------------
# Each rule takes (builder, inputs, zeta, dest) and returns the output index.
# The final gate of a rule is always emitted at ``dest`` when one is given.

Rule = Callable[[_Builder, tuple, object, int | None], int]


def _copy(b, ins, zeta, dest):
    (x,) = ins
    return b.g(T.COMPL, b.g(T.COMPL, x), dest=dest)


def _sub_via_add(b, ins, zeta, dest):
    # trunc(x - y) = 1 - trunc((1 - x) + y)
    x, y = ins
    return b.g(T.COMPL, b.g(T.ADD, b.g(T.COMPL, x), y), dest=dest)


def _one_via_add(b, ins, zeta, dest):
    # x + (1 - x) = 1 for any x; x is fed back from the output
    out = dest if dest is not None else b.reserve()
    g1 = b.g(T.COMPL, out)
    g2 = b.g(T.COMPL, g1)
    return b.g(T.ADD, g1, g2, dest=out)


def _zero(b, ins, zeta, dest):
    return b.g(T.COMPL, b.g(T.ONE), dest=dest)


def _half_via_sub(b, ins, zeta, dest):
    # v = trunc(x - v) forces v = x / 2
    (x,) = ins
    out = dest if dest is not None else b.reserve()
    return b.g(T.COPY, b.g(T.SUB, x, out), dest=out)


def _times2_via_add(b, ins, zeta, dest):
    (x,) = ins
    return b.g(T.ADD, x, x, dest=dest)


def _scale_binary(b, ins, zeta, dest):
    """``zeta * x`` through halvings along the binary expansion of ``zeta``."""
    (x,) = ins
    zeta = as_fraction(zeta)
    if zeta == 0:
        return _zero(b, (), None, dest)
    if zeta == 1:
        return b.g(T.COPY, x, dest=dest)
    k = _scale_bits(b.eps)
    a = scale_digits(zeta, k)
    b.notes.append(f"scale {zeta} approximated by {a}/2^{k} (error {float(abs(zeta - Fraction(a, 2**k))):.3g})")
    bits = [(a >> i) & 1 for i in range(k)]
    half_x = b.g(T.HALF, x)
    acc = half_x if bits[0] else _zero(b, (), None, None)
    for i in range(1, k):
        last = i == k - 1
        target = dest if last else None
        if bits[i]:
            acc = b.g(T.ADD, b.g(T.HALF, acc), half_x, dest=target)
        else:
            acc = b.g(T.HALF, acc, dest=target)
    return acc


def _const_via_scale(b, ins, zeta, dest):
    zeta = as_fraction(zeta)
    if zeta == 1:
        return b.g(T.ONE, dest=dest)
    if zeta == 0:
        return _zero(b, (), None, dest)
    return b.g(T.SCALE, b.g(T.ONE), zeta=zeta, dest=dest)


def _max(b, ins, zeta, dest):
    # max(x, y) = trunc(x + trunc(y - x))
    x, y = ins
    return b.g(T.ADD, x, b.g(T.SUB, y, x), dest=dest)


def _min(b, ins, zeta, dest):
    x, y = ins
    return b.g(T.COMPL, b.g(T.MAX, b.g(T.COMPL, x), b.g(T.COMPL, y)), dest=dest)


def _add_via_sub(b, ins, zeta, dest):
    # trunc(x + y) = 1 - trunc((1 - x) - y)
    x, y = ins
    return b.g(T.COMPL, b.g(T.SUB, b.g(T.COMPL, x), y), dest=dest)


def _int_scale(b, ins, zeta, dest):
    (x,) = ins
    k = int(as_fraction(zeta))
    if k == 0:
        return _zero(b, (), None, dest)
    if k == 1:
        return b.g(T.COPY, x, dest=dest)
    top = k.bit_length() - 1
    single = k == 1 << top
    powers = [x]
    for n in range(top):
        last = single and n == top - 1
        powers.append(b.g(T.TIMES2, powers[-1], dest=dest if last else None))
    if single:
        return powers[-1]
    terms = [p for i, p in enumerate(powers) if (k >> i) & 1]
    acc = terms[0]
    for n, t in enumerate(terms[1:], start=2):
        acc = b.g(T.ADD, acc, t, dest=dest if n == len(terms) else None)
    return acc


def _one_via_phi(b, ins, zeta, dest):
    # 2^3 * phi(.,.) >= 2 for any inputs; phi reads the output back
    out = dest if dest is not None else b.reserve()
    g1 = b.g(T.PHI, out, out)
    g2 = b.g(T.TIMES2, g1)
    g3 = b.g(T.TIMES2, g2)
    return b.g(T.TIMES2, g3, dest=out)


def _half_via_phi(b, ins, zeta, dest):
    # 1 - phi(1 - x, 1) = x / 2
    (x,) = ins
    return b.g(T.COMPL, b.g(T.PHI, b.g(T.COMPL, x), b.g(T.ONE)), dest=dest)


def _inv(b, ins, zeta, dest):
    # v = phi(1 - x, v) forces v = (2 - x) / (2 + x) = -1 + 4 / (2 + x)
    (x,) = ins
    out = dest if dest is not None else b.reserve()
    g2 = b.g(T.COMPL, x)
    g3 = b.g(T.PHI, g2, out)
    return b.g(T.COPY, g3, dest=out)


def _sub_via_phi(b, ins, zeta, dest):
    # phi(phi(inv(y), 1 - x), y / 2) = 1/2 + (y - x) / 8, then 4 (1 - trunc(2 .))
    x, y = ins
    g3 = b.g(T.INV, y)
    g4 = b.g(T.COMPL, x)
    g5 = b.g(T.PHI, g3, g4)
    g6 = b.g(T.HALF, y)
    g7 = b.g(T.PHI, g5, g6)
    g8 = b.g(T.TIMES2, g7)
    g9 = b.g(T.COMPL, g8)
    g10 = b.g(T.TIMES2, g9)
    return b.g(T.TIMES2, g10, dest=dest)


def _quarter(b, x):
    return b.g(T.HALF, b.g(T.HALF, x))


def _mul_via_phi(b, ins, zeta, dest):
    # phi(x, y) - 1/4 - x/4 - y/4 = xy / 4
    x, y = ins
    g = b.g(T.PHI, x, y)
    g = b.g(T.SUB, g, _quarter(b, b.g(T.ONE)))
    g = b.g(T.SUB, g, _quarter(b, x))
    g = b.g(T.SUB, g, _quarter(b, y))
    return b.g(T.TIMES2, b.g(T.TIMES2, g), dest=dest)


def _half_const(b, dest):
    # v = 1 - v
    out = dest if dest is not None else b.reserve()
    g2 = b.g(T.COMPL, out)
    return b.g(T.COPY, g2, dest=out)


def _half_via_mul(b, ins, zeta, dest):
    (x,) = ins
    return b.g(T.MUL, x, _half_const(b, None), dest=dest)


def _one_via_half_const(b, ins, zeta, dest):
    return b.g(T.TIMES2, _half_const(b, None), dest=dest)


def _phi_via_mul(b, ins, zeta, dest):
    # (x + 1) / 2 = 1 - (1 - x) / 2
    x, y = ins
    ax = b.g(T.COMPL, b.g(T.HALF, b.g(T.COMPL, x)))
    ay = b.g(T.COMPL, b.g(T.HALF, b.g(T.COMPL, y)))
    return b.g(T.MUL, ax, ay, dest=dest)


def _const_via_cycle(b, ins, zeta, dest):
    """``c/d`` from the cycle ``v = 1 - trunc((d - 1) v)``, whose solution is ``1/d``."""
    zeta = as_fraction(zeta)
    if zeta == 1:
        return b.g(T.ONE, dest=dest)
    if zeta == 0:
        return _zero(b, (), None, dest)
    c, d = zeta.numerator, zeta.denominator
    g1 = b.reserve()
    g2 = b.g(T.COMPL, g1)
    b.g(T.INT_SCALE, g2, zeta=Fraction(d - 1), dest=g1)
    return b.g(T.INT_SCALE, g2, zeta=Fraction(c), dest=dest)


def _scale_via_mul(b, ins, zeta, dest):
    (x,) = ins
    return b.g(T.MUL, x, b.g(T.CONST, zeta=zeta), dest=dest)


def _square_via_mul(b, ins, zeta, dest):
    (x,) = ins
    return b.g(T.MUL, x, x, dest=dest)


def _mul_via_square(b, ins, zeta, dest):
    # (x/2 + y/2)^2 - (x/2)^2 - (y/2)^2 = xy / 2
    x, y = ins
    hx, hy = b.g(T.HALF, x), b.g(T.HALF, y)
    whole = b.g(T.SQUARE, b.g(T.ADD, hx, hy))
    parts = b.g(T.ADD, b.g(T.SQUARE, hx), b.g(T.SQUARE, hy))
    return b.g(T.TIMES2, b.g(T.SUB, whole, parts), dest=dest)


_COMMON: dict[GateType, Rule] = {
    T.COPY: _copy,
    T.MAX: _max,
    T.MIN: _min,
    T.INT_SCALE: _int_scale,
}

_RULES: dict[str, dict[GateType, Rule]] = {
    "plus": {
        T.ONE: _one_via_add,
        T.SUB: _sub_via_add,
        T.HALF: _half_via_sub,
        T.TIMES2: _times2_via_add,
        T.SCALE: _scale_binary,
        T.CONST: _const_via_scale,
    },
    "phi": {
        T.ONE: _one_via_phi,
        T.HALF: _half_via_phi,
        T.INV: _inv,
        T.SUB: _sub_via_phi,
        T.ADD: _add_via_sub,
        T.MUL: _mul_via_phi,
        T.SQUARE: _square_via_mul,
        T.CONST: _const_via_cycle,
        T.SCALE: _scale_via_mul,
    },
    "exact": {
        T.ONE: _one_via_half_const,
        T.HALF: _half_via_mul,
        T.PHI: _phi_via_mul,
        T.INV: _inv,
        T.SUB: _sub_via_phi,
        T.ADD: _add_via_sub,
        T.SQUARE: _square_via_mul,
        T.CONST: _const_via_cycle,
        T.SCALE: _scale_via_mul,
    },
    "square": {
        T.ONE: _one_via_add,
        T.SUB: _sub_via_add,
        T.HALF: _half_via_sub,
        T.TIMES2: _times2_via_add,
        T.SCALE: _scale_binary,
        T.CONST: _const_via_scale,
        T.MUL: _mul_via_square,
        T.PHI: _phi_via_mul,
        T.INV: _inv,
    },
}


def _rule_for(family: Family, t: GateType) -> Rule | None:
    return _RULES[family.name].get(t) or _COMMON.get(t)


def _bound(family: Family, t: GateType, natives: frozenset, zeta) -> int | None:
    if t in natives:
        return 1
    if t is T.SCALE and family.name in ("plus", "square"):
        z = as_fraction(zeta)
        return 3 if z == 0 else 2 if z == 1 else 23
    if t is T.CONST and family.name in ("plus", "square"):
        z = as_fraction(zeta)
        return 3 if z == 0 else 2 if z == 1 else 25
    if t is T.INT_SCALE and family.name in ("plus", "square", "phi"):
        add = family.bounds.get(T.ADD, 1) if T.ADD not in natives else 1
        return _int_scale_bound(int(as_fraction(zeta)), add)
    return family.bounds.get(t)


# -- driver --------------------------------------------------------------------------


@dataclass(frozen=True)
class LoweredCircuit:
    circuit: GeneralizedCircuit
    multiplier: int | None  # None: only exact solutions are guaranteed to read back
    index_map: tuple[int, ...]
    eps_max: Fraction
    gate_multipliers: tuple
    family: str
    notes: tuple[str, ...] = ()

    def read_back(self, values):
        return [values[i] for i in self.index_map]


def lower_circuit(
    circuit: GeneralizedCircuit,
    target: Iterable[GateType],
    eps_budget=0,
    keep: Iterable[int] = (),
) -> LoweredCircuit:
    """Rewrite ``circuit`` over ``target``.

    Gates listed in ``keep`` are copied unchanged (useful for pinning inputs
    when testing a gadget). ``eps_budget`` sets the precision of the
    scale-by-constant gadget and is otherwise informational.
    """
    target = frozenset(target)
    fam = family_of(target)
    eps = as_fraction(eps_budget)
    if eps < 0:
        raise DomainError("eps_budget must be non-negative")
    keep = frozenset(keep)
    nu = len(circuit)
    keep_types = frozenset(circuit.gates[i].type for i in keep)
    b = _Builder(target, fam, eps, keep_types)
    for _ in range(nu):
        b.reserve()
    mults = []
    for i, gate in enumerate(circuit.gates):
        if i in keep or gate.type in target:
            b.put(gate.type, gate.j, gate.k, gate.zeta, dest=i)
            mults.append(1)
            continue
        b.g(gate.type, *gate.inputs(), zeta=gate.zeta, dest=i)
        mults.append(_bound(fam, gate.type, target, gate.zeta))
    if any(g is None for g in b.gates):  # pragma: no cover
        raise StructureError("internal error: unfilled gate slot")
    lowered = GeneralizedCircuit(tuple(b.gates), target | keep_types)
    multiplier = None if any(m is None for m in mults) else max(mults, default=1)
    notes = list(b.notes)
    if eps > fam.eps_max and multiplier is not None and multiplier > 1:
        notes.append(f"eps_budget {eps} exceeds the validity bound {fam.eps_max} of the {fam.name} gadgets")
    return LoweredCircuit(
        lowered, multiplier, tuple(range(nu)), fam.eps_max, tuple(mults), fam.name, tuple(notes)
    )


def lower_gate(t: GateType, target: Iterable[GateType], zeta=None, eps_budget=0) -> LoweredCircuit:
    """Lower a single gate whose inputs are free constant gates (for testing).

    The source circuit is ``[Gz(0), Gz(0), t(0, 1)]`` (inputs as needed); the
    constant gates are kept, so callers pin them via ``fixed`` when solving.
    """
    inputs = [Gate(T.CONST, zeta=Fraction(0)) for _ in range(t.arity)]
    ins = list(range(t.arity)) + [None] * (2 - t.arity)
    src = GeneralizedCircuit(tuple(inputs) + (Gate(t, ins[0], ins[1], zeta),))
    return lower_circuit(src, target, eps_budget, keep=range(t.arity))
