"""Compile generalized circuits over ``{Gx2, G1-, Gphi}`` into auctions.

Each gate becomes a *gate-bidder* whose second jump point encodes the gate
value; up to nine auxiliary bidders per gate implement the gadget relating it
to its inputs through carefully shaped block priors. Everything is built on a
working value scale [0, 5] with bids {0, 1, 2, 3, 4} and rescaled by 1/5 on
emission, so jump points and epsilons seen by callers live on [0, 1].

On the working scale a bidder is *valid* when
``a0 in [1, 3/2]``, ``a1 in [7/3 - 2e, 8/3 + 2e]``, ``a2 in [7/2, 5]``,
``a3 = 5``; it encodes ``trunc(3 (a1 - 7/3))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .auction import (
    AuctionInstance,
    FloatEngine,
    StrategyProfile,
    envelope_jumps,
    verify_epsilon_bne,
)
from .distributions import PiecewiseCdf
from .errors import DomainError, ReductionFailure, StructureError
from .gcircuit import GateType, GeneralizedCircuit, check_assignment, phi
from .rational import as_fraction, clamp

__all__ = [
    "SCALE",
    "WORK_BIDS",
    "STANDARD",
    "GADGET_AUX",
    "ReductionOutput",
    "Validity",
    "base_blocks",
    "emit_gadget",
    "build_auction",
    "classify_working",
    "is_valid_bidder",
    "decode_value",
    "decode_assignment",
    "verify_reduction",
    "ReductionReport",
]

F = Fraction
SCALE = 5
WORK_BIDS = (0, 1, 2, 3, 4)
MIN_BIDDERS = 24
AUX_PER_GATE = 9
REDUCIBLE = frozenset({GateType.TIMES2, GateType.COMPL, GateType.PHI})

NULL_BLOCKS = (((F(0), F(1)), F(1)),)
STANDARD = (F(1, 3), F(1, 3), F(1, 3), F(2, 3))
TIMES2_BASE = (F(1, 3), F(1, 3), F(1, 3), F(1, 2))
COMPL_BASE_IN = (F(1, 6), F(2, 3), F(1, 3), F(2, 3))
COMPL_BASE_OUT = (F(1, 3), F(1, 3), F(2, 3), F(5, 6))
COMPL_MIDDLE = (((F(3, 2), F(7, 4)), F(2, 3)), ((F(4), F(5)), F(1, 3)))
PHI_BASE_IN = (F(1, 20), F(8, 20), F(1, 3), F(2, 3))
PHI_MIDDLE = (((F(3, 2), F(7, 4)), F(1, 2)), ((F(7, 2), F(5)), F(1, 2)))
PHI_BASE_OUT = (F(1, 3), F(5, 12), F(104, 200), F(779, 800))

# Auxiliary bidders consumed per gadget, in the order they are used.
GADGET_AUX = {"base": 0, "projection": 2, "times2": 3, "complement": 5, "phi": 8}

Blocks = tuple
Rows = dict  # bidder -> {opponent: blocks}


def base_blocks(gamma_l, gamma_r, left, right) -> Blocks:
    """Prior blocks of the base gadget on the working scale."""
    gl, gr, lo, hi = (as_fraction(x) for x in (gamma_l, gamma_r, left, right))
    if not (0 <= gl and 0 <= gr and gl + gr < 1):
        raise DomainError(f"need gamma_l, gamma_r >= 0 and gamma_l + gamma_r < 1, got {gl}, {gr}")
    if not (0 <= lo < hi <= 1):
        raise DomainError(f"need 0 <= l < r <= 1, got {lo}, {hi}")
    blocks = [
        ((F(3, 2), F(7, 4)), gl),
        ((2 + lo, 2 + hi), 1 - gl - gr),
        ((F(13, 4), F(7, 2)), gr),
    ]
    return tuple(b for b in blocks if b[1] > 0)


def _merge(target: Rows, extra: Rows) -> Rows:
    for bidder, row in extra.items():
        if bidder in target:
            raise StructureError(f"bidder {bidder} receives priors from two gadgets")
        target[bidder] = dict(row)
    return target


def emit_gadget(kind: str, inputs: Sequence[int], output: int, aux: Sequence[int] = (), params=None) -> Rows:
    """Prior rows (working scale) that a gadget assigns to its bidders.

    Only non-null entries are returned; every other prior of these bidders
    is the null block, volume 1 on [0, 1].
    """
    if kind not in GADGET_AUX:
        raise StructureError(f"unknown gadget kind {kind!r}")
    need = GADGET_AUX[kind]
    aux = list(aux)
    inputs = list(inputs)
    arity = 2 if kind == "phi" else 1
    if len(inputs) != arity:
        raise StructureError(f"{kind} gadget takes {arity} inputs")
    if kind == "phi" and inputs[0] == inputs[1]:
        need += 1  # one extra copy of the shared input
    if len(aux) != need:
        raise StructureError(f"{kind} gadget needs {need} auxiliary bidders, got {len(aux)}")
    ids = inputs + [output] + aux
    if len(set(ids)) != len(ids) - (1 if kind == "phi" and inputs[0] == inputs[1] else 0):
        raise StructureError(f"bidder ids collide in {kind} gadget: {ids}")
    j = inputs[0]
    if kind == "base":
        return {output: {j: base_blocks(*(params or STANDARD))}}
    if kind == "projection":
        k1, k2 = aux
        rows: Rows = {}
        _merge(rows, emit_gadget("base", [j], k1))
        _merge(rows, emit_gadget("base", [k1], k2))
        _merge(rows, emit_gadget("base", [k2], output))
        return rows
    if kind == "times2":
        k, p1, p2 = aux
        rows = emit_gadget("base", [j], k, params=TIMES2_BASE)
        return _merge(rows, emit_gadget("projection", [k], output, [p1, p2]))
    if kind == "complement":
        k1, k2, k3, p1, p2 = aux
        rows = emit_gadget("base", [j], k1, params=COMPL_BASE_IN)
        _merge(rows, {k2: {k1: COMPL_MIDDLE}})
        _merge(rows, emit_gadget("base", [k2], k3, params=COMPL_BASE_OUT))
        return _merge(rows, emit_gadget("projection", [k3], output, [p1, p2]))
    # phi
    j1, j2 = inputs
    k1, k2, k3, *rest = aux
    rows = {}
    if j1 == j2:
        spare = rest.pop()
        _merge(rows, emit_gadget("base", [j1], spare))
        j2 = spare
    rows[k1] = {j1: base_blocks(*PHI_BASE_IN), j2: base_blocks(*PHI_BASE_IN)}
    _merge(rows, {k2: {k1: PHI_MIDDLE}})
    _merge(rows, emit_gadget("base", [k2], k3, params=PHI_BASE_OUT))
    return _merge(rows, emit_gadget("complement", [k3], output, rest))


_CDF_CACHE: dict = {}


def _cdf(blocks: Blocks) -> PiecewiseCdf:
    hit = _CDF_CACHE.get(blocks)
    if hit is None:
        hit = PiecewiseCdf.from_blocks([((lo / SCALE, hi / SCALE), vol) for (lo, hi), vol in blocks])
        _CDF_CACHE[blocks] = hit
    return hit


def assemble(rows: Rows, n: int) -> AuctionInstance:
    """Rescale working-scale rows into an instance, filling gaps with the null block."""
    null = _cdf(NULL_BLOCKS)
    priors = []
    for i in range(n):
        row = rows.get(i, {})
        priors.append(tuple(None if t == i else _cdf(row[t]) if t in row else null for t in range(n)))
    bids = tuple(F(b, SCALE) for b in WORK_BIDS)
    return AuctionInstance(bids, tuple(priors))


@dataclass(frozen=True)
class ReductionOutput:
    auction: AuctionInstance
    num_gates: int
    roles: tuple  # per bidder: ("gate", i) | ("aux", owner_gate, slot) | ("pad",)
    scale: int = SCALE
    working_scale: bool = False  # the emitted auction lives on [0, 1]

    def aux_pool(self, gate: int) -> list[int]:
        start = self.num_gates + AUX_PER_GATE * gate
        return list(range(start, start + AUX_PER_GATE))

    def sidecar(self) -> str:
        """Human-readable role and decode description."""
        lines = [
            f"gates {self.num_gates}",
            f"bidders {self.auction.n}",
            f"scale 1/{self.scale}",
            "decode v[i] = trunc_[0,1](3*(5*alpha_i(1/5) - 7/3)) for valid gate-bidders",
            "valid a0 in [1,3/2], a1 in [7/3-2e,8/3+2e], a2 in [7/2,5], a3 = 5 (working scale, e = 5*eps)",
        ]
        for b, role in enumerate(self.roles):
            lines.append(f"bidder {b} " + " ".join(str(x) for x in role))
        return "\n".join(lines) + "\n"


def build_auction(circuit: GeneralizedCircuit) -> ReductionOutput:
    """Auction whose equilibria encode approximate solutions of ``circuit``."""
    bad = {g.type for g in circuit.gates} - REDUCIBLE
    if bad:
        names = ", ".join(sorted(t.label for t in bad))
        raise StructureError(f"gates {names} must be lowered to Gx2/G1-/Gphi first")
    nu = len(circuit)
    if nu == 0:
        raise StructureError("cannot reduce an empty circuit")
    total = max(10 * nu, MIN_BIDDERS)
    roles: list = [("pad",)] * total
    rows: Rows = {}
    for i, g in enumerate(circuit.gates):
        roles[i] = ("gate", i)
        pool = list(range(nu + AUX_PER_GATE * i, nu + AUX_PER_GATE * (i + 1)))
        if g.type is GateType.TIMES2:
            kind, inputs = "times2", [g.j]
        elif g.type is GateType.COMPL:
            kind, inputs = "complement", [g.j]
        else:
            kind, inputs = "phi", [g.j, g.k]
        need = GADGET_AUX[kind] + (1 if kind == "phi" and g.j == g.k else 0)
        assert need <= AUX_PER_GATE, "auxiliary pool exhausted"
        aux = pool[:need]
        for slot, b in enumerate(aux):
            roles[b] = ("aux", i, slot)
        _merge(rows, emit_gadget(kind, inputs, i, aux))
    return ReductionOutput(assemble(rows, total), nu, tuple(roles))


# -- validity and decoding --------------------------------------------------------


@dataclass(frozen=True)
class Validity:
    valid: bool
    almost_valid: bool


def classify_working(jumps: Sequence, eps_w=0) -> Validity:
    """Validity of working-scale jumps ``(a0, a1, a2, a3)``."""
    a0, a1, a2, a3 = jumps[:4]
    outer = 1 <= a0 <= F(3, 2) and F(7, 2) <= a2 <= 5 and a3 == 5
    valid = outer and F(7, 3) - 2 * eps_w <= a1 <= F(8, 3) + 2 * eps_w
    almost = outer and 2 <= a1 <= 3
    return Validity(bool(valid), bool(almost))


def _working(row: Sequence) -> list:
    return [x * SCALE for x in row]


def is_valid_bidder(profile: StrategyProfile, i: int, eps=0) -> Validity:
    """Validity of bidder ``i`` of a reduction auction (``eps`` on [0, 1])."""
    row = profile.jumps[i]
    exact = all(isinstance(x, Fraction) for x in row)
    eps_w = as_fraction(eps) * SCALE if exact else float(eps) * SCALE
    jumps = _working(row)
    if not exact:
        # Products like 0.2 * 5 may round just off the boundary values.
        jumps = [float(np.round(x, 12)) if abs(x - round(x)) < 1e-12 else x for x in jumps]
    return classify_working(jumps, eps_w)


def decode_value(alpha1_working):
    """Encoded value ``trunc(3 (a1 - 7/3))`` of a working-scale second jump."""
    return clamp(3 * (alpha1_working - F(7, 3)), 0, 1)


def decode_assignment(output: ReductionOutput, profile: StrategyProfile, eps=0, gates_only: bool = True) -> list:
    """Encoded values of the (gate-)bidders; ``None`` for invalid bidders."""
    count = output.num_gates if gates_only else output.auction.n
    out = []
    for i in range(count):
        if is_valid_bidder(profile, i, eps).valid:
            out.append(decode_value(profile.jumps[i][1] * SCALE))
        else:
            out.append(None)
    return out


@dataclass(frozen=True)
class ReductionReport:
    satisfied: bool
    assignment: tuple
    slack: tuple  # per gate: 500*eps minus violation
    max_violation: float
    max_regret: float


def verify_reduction(circuit: GeneralizedCircuit, output: ReductionOutput, profile: StrategyProfile, eps) -> ReductionReport:
    """Check that an equilibrium decodes to a ``500 eps``-satisfying assignment.

    Raises :class:`ReductionFailure` naming the bidder if a gate-bidder is
    invalid, which would contradict the construction.
    """
    eps_q = as_fraction(eps)
    if eps_q > F(1, 10**5):
        raise DomainError("the reduction guarantee needs eps <= 1e-5")
    report = verify_epsilon_bne(output.auction, profile, eps)
    if not report.is_eq:
        raise DomainError(f"profile is not an eps-equilibrium (max regret {float(report.max_regret):.3e})")
    values = decode_assignment(output, profile, eps)
    for i, v in enumerate(values):
        if v is None:
            raise ReductionFailure(f"gate-bidder {i} is not valid", bidder=i)
    bound = 500 * (eps_q if profile.is_exact else float(eps_q))
    check = check_assignment(circuit, values, bound)
    slack = tuple(bound - v for v in check.violations)
    return ReductionReport(check.satisfied, tuple(values), slack, float(check.max_violation), float(report.max_regret))


# -- isolated gadget harness ------------------------------------------------------


@dataclass(frozen=True)
class GadgetBed:
    """A single gadget embedded in a small auction with exogenous inputs."""

    kind: str
    instance: AuctionInstance
    inputs: tuple[int, ...]
    output: int
    aux: tuple[int, ...]
    order: tuple[int, ...]  # gadget bidders, each after the bidders it reads
    params: tuple | None = None
    rows: Mapping = field(default=None, repr=False)


def gadget_bed(kind: str, params=None, shared_input: bool = False, n: int = MIN_BIDDERS) -> GadgetBed:
    """Embed one gadget: inputs first, then output, auxiliaries, inert padding."""
    arity = 2 if kind == "phi" else 1
    inputs = [0] if shared_input else list(range(arity))
    if kind == "phi" and shared_input:
        inputs = [0, 0]
    first = max(inputs) + 1
    output = first
    need = GADGET_AUX[kind] + (1 if shared_input and kind == "phi" else 0)
    aux = list(range(first + 1, first + 1 + need))
    rows = emit_gadget(kind, inputs, output, aux, params)
    instance = assemble(rows, max(n, first + 1 + need))
    order = _read_order(rows, set(inputs))
    return GadgetBed(kind, instance, tuple(dict.fromkeys(inputs)), output, tuple(aux), tuple(order), params, rows)


def _read_order(rows: Rows, ready: set) -> list[int]:
    order, done = [], set(ready)
    pending = dict(rows)
    while pending:
        progressed = False
        for b in sorted(pending):
            if set(pending[b]) <= done:
                order.append(b)
                done.add(b)
                del pending[b]
                progressed = True
        if not progressed:
            raise StructureError("gadget priors form a cycle")
    return order


def default_jumps() -> tuple:
    """A valid strategy on [0, 1] (working (6/5, 5/2, 4, 5))."""
    return (F(6, 25), F(1, 2), F(4, 5), F(1), F(1))


def solve_gadget(
    bed: GadgetBed,
    input_rows: Sequence[Sequence],
    eps=0.0,
    rng: np.random.Generator | None = None,
) -> StrategyProfile:
    """Equilibrium of a gadget bed given exogenous input strategies.

    Gadget bidders best-respond in dependency order. With ``eps > 0`` and an
    ``rng``, each bidder's jumps are then pushed in a random direction as far
    as its own regret stays within ``eps``, producing an adversarial
    eps-equilibrium rather than the exact one.
    """
    inst = bed.instance
    rows = [list(map(float, default_jumps())) for _ in range(inst.n)]
    for b, r in zip(bed.inputs, input_rows):
        rows[b] = [float(x) for x in r]
    engine = FloatEngine.for_instance(inst)
    bids = inst.float_bids
    A = np.array(rows)
    inert = [b for b in range(inst.n) if b not in bed.order and b not in bed.inputs]
    for b in list(bed.order) + inert:
        H = engine.win_probs(A)[b]
        A[b] = envelope_jumps(list(bids), list(H))
        if eps > 0 and rng is not None:
            A[b] = _perturb_within(engine, A, b, float(eps), rng)
    return StrategyProfile.from_array(A)


def _project_row(row: np.ndarray, bids: np.ndarray) -> np.ndarray:
    out = row.copy()
    prev = 0.0
    for k in range(len(out) - 1):
        out[k] = min(max(out[k], prev, bids[k + 1]), 1.0)
        prev = out[k]
    out[-1] = 1.0
    return out


def row_regret(bids: np.ndarray, H: np.ndarray, row: np.ndarray) -> float:
    """Largest endpoint deviation gain of one bidder with win probabilities ``H``."""
    worst = 0.0
    for k in range(len(bids)):
        lo = row[k - 1] if k else 0.0
        hi = row[k]
        if not lo < hi:
            continue
        for k2 in range(len(bids)):
            if k2 != k:
                v = lo if k2 < k else hi
                worst = max(worst, (v - bids[k2]) * H[k2] - (v - bids[k]) * H[k])
    return worst


def _perturb_within(engine: FloatEngine, A: np.ndarray, b: int, eps: float, rng) -> np.ndarray:
    # The bidder's own win probabilities do not depend on its own jumps.
    H = engine.win_probs(A)[b]
    bids = engine.bids
    base = A[b].copy()
    direction = rng.uniform(-1.0, 1.0, size=base.shape)
    direction[-1] = 0.0
    lo, hi = 0.0, 1.0
    for _ in range(40):
        mid = (lo + hi) / 2
        if row_regret(bids, H, _project_row(base + mid * direction, bids)) <= 0.98 * eps:
            lo = mid
        else:
            hi = mid
    return _project_row(base + lo * direction, bids)


def random_valid_jumps(rng: np.random.Generator, almost: bool = False) -> tuple:
    """A random (almost-)valid strategy on [0, 1]."""
    a0 = rng.uniform(1.0, 1.5)
    a1 = rng.uniform(2.0, 3.0) if almost else rng.uniform(7 / 3, 8 / 3)
    a2 = rng.uniform(3.5, 5.0)
    return tuple(x / SCALE for x in (a0, a1, a2, 5.0)) + (1.0,)


def random_domain_jumps(rng: np.random.Generator) -> tuple:
    """An arbitrary monotone non-overbidding strategy on [0, 1]."""
    pts = np.sort(rng.uniform(0, 1, 4))
    row = np.concatenate([pts, [1.0]])
    return tuple(_project_row(row, np.array([0, 0.2, 0.4, 0.6, 0.8])))


def claim_bound(kind: str) -> int:
    """Working-scale error constant of a gadget claim, in units of epsilon."""
    return {"base": 6, "projection": 18, "times2": 24, "complement": 60, "phi": 86}[kind]


def claim_prediction(kind: str, input_alpha1_working: Sequence[float], params=None) -> float:
    """Value the claim predicts for the output from valid inputs' second jumps."""
    vals = [float(decode_value(x)) for x in input_alpha1_working]
    if kind == "base":
        gl, gr, lo, hi = (float(p) for p in (params or STANDARD))
        a = min(max(input_alpha1_working[0], 2 + lo), 2 + hi)
        return (3 * gl - 1) + 3 * (1 - gl - gr) * (a - (2 + lo)) / (hi - lo)
    if kind == "projection":
        return vals[0]
    if kind == "times2":
        return min(1.0, 2 * vals[0])
    if kind == "complement":
        return 1 - vals[0]
    return float(phi(vals[0], vals[-1]))
