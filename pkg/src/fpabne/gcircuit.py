"""Generalized circuits: gates over [0, 1] that may form cycles.

An assignment ``v`` epsilon-satisfies gate ``g_i`` when ``v[i]`` is within
``eps`` of the gate's target function applied to its inputs, truncated to
[0, 1]. Indices are 0-based throughout, including the text format.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainError, ResourceError, StructureError
from .rational import as_fraction, clamp

__all__ = [
    "GateType",
    "Gate",
    "GeneralizedCircuit",
    "CheckReport",
    "IterateConfig",
    "SolveResult",
    "gate_eval",
    "check_assignment",
    "brute_force_solve",
    "iterate_solve",
    "strongly_connected_components",
    "parse_circuit",
    "format_circuit",
    "parse_assignment",
    "format_assignment",
]


class GateType(enum.Enum):
    """Gate kinds with (text name, input count, takes a parameter)."""

    ONE = ("G1", 0, False)
    CONST = ("Gz", 0, True)
    ADD = ("G+", 2, False)
    SUB = ("G-", 2, False)
    COMPL = ("G1-", 1, False)
    TIMES2 = ("Gx2", 1, False)
    MUL = ("Gx", 2, False)
    SQUARE = ("Gsq", 1, False)
    PHI = ("Gphi", 2, False)
    COPY = ("G=", 1, False)
    HALF = ("G/2", 1, False)
    SCALE = ("Gxz", 1, True)
    INT_SCALE = ("Gxk", 1, True)
    INV = ("Ginv", 1, False)
    MAX = ("Gmax", 2, False)
    MIN = ("Gmin", 2, False)

    @property
    def label(self) -> str:
        return self.value[0]

    @property
    def arity(self) -> int:
        return self.value[1]

    @property
    def has_param(self) -> bool:
        return self.value[2]

    @classmethod
    def from_label(cls, text: str) -> "GateType":
        for t in cls:
            if t.label == text:
                return t
        raise StructureError(f"unknown gate type {text!r}")


ALL_GATES = frozenset(GateType)


def phi(x, y):
    """``(x + 1)(y + 1) / 4``: maps [0, 1]^2 onto [1/4, 1]."""
    return (x + 1) * (y + 1) / 4


def _raw(t: GateType, x, y, zeta):
    if t is GateType.ONE:
        return 1
    if t is GateType.CONST:
        return zeta
    if t is GateType.ADD:
        return x + y
    if t is GateType.SUB:
        return x - y
    if t is GateType.COMPL:
        return 1 - x
    if t is GateType.TIMES2:
        return 2 * x
    if t is GateType.MUL:
        return x * y
    if t is GateType.SQUARE:
        return x * x
    if t is GateType.PHI:
        return phi(x, y)
    if t is GateType.COPY:
        return x
    if t is GateType.HALF:
        return x / 2
    if t in (GateType.SCALE, GateType.INT_SCALE):
        return zeta * x
    if t is GateType.INV:
        return -1 + 4 / (2 + x)
    if t is GateType.MAX:
        return max(x, y)
    if t is GateType.MIN:
        return min(x, y)
    raise StructureError(f"unhandled gate type {t}")  # pragma: no cover


def gate_eval(t: GateType, *inputs, zeta=None):
    """Target value of a gate, truncated to [0, 1].

    Rational inputs give exact results; floats give floats.
    """
    if len(inputs) != t.arity:
        raise StructureError(f"{t.label} takes {t.arity} inputs, got {len(inputs)}")
    if t.has_param and zeta is None:
        raise StructureError(f"{t.label} needs a parameter")
    for x in inputs:
        if not 0 <= x <= 1:
            raise DomainError(f"gate input {x} outside [0, 1]")
    x = inputs[0] if inputs else None
    y = inputs[1] if len(inputs) > 1 else None
    if t is GateType.HALF and isinstance(x, int):
        x = Fraction(x)
    if t is GateType.INV and not isinstance(x, float):
        x = Fraction(x)
    val = _raw(t, x, y, zeta)
    zero, one = (0.0, 1.0) if isinstance(val, float) else (0, 1)
    return clamp(val, zero, one)


@dataclass(frozen=True)
class Gate:
    type: GateType
    j: int | None = None
    k: int | None = None
    zeta: Fraction | None = None

    def inputs(self) -> tuple[int, ...]:
        return tuple(x for x in (self.j, self.k)[: self.type.arity])


@dataclass(frozen=True)
class GeneralizedCircuit:
    """Gates ``g_0..g_{nu-1}``; gate ``i`` reads the values of ``j`` (and ``k``)."""

    gates: tuple[Gate, ...]
    gate_set: frozenset = ALL_GATES

    def __post_init__(self) -> None:
        gates = tuple(self.gates)
        object.__setattr__(self, "gates", gates)
        object.__setattr__(self, "gate_set", frozenset(self.gate_set))
        nu = len(gates)
        for i, g in enumerate(gates):
            if g.type not in self.gate_set:
                raise StructureError(f"gate {i}: {g.type.label} not in the declared gate set")
            ins = (g.j, g.k)[: g.type.arity]
            if any(x is None for x in ins):
                raise StructureError(f"gate {i}: {g.type.label} needs {g.type.arity} inputs")
            for x in ins:
                if not 0 <= x < nu:
                    raise StructureError(f"gate {i}: input {x} out of range")
                if x == i:
                    raise StructureError(f"gate {i}: reads its own value")
            if g.type.has_param:
                if g.zeta is None:
                    raise StructureError(f"gate {i}: {g.type.label} needs zeta")
                z = as_fraction(g.zeta)
                if g.type is GateType.INT_SCALE and (z.denominator != 1 or z < 0):
                    raise StructureError(f"gate {i}: integer scale {z} is not a natural number")
                if g.type is not GateType.INT_SCALE and not 0 <= z <= 1:
                    raise StructureError(f"gate {i}: zeta {z} outside [0, 1]")

    def __len__(self) -> int:
        return len(self.gates)

    def eval_gate(self, i: int, values: Sequence):
        g = self.gates[i]
        return gate_eval(g.type, *(values[x] for x in g.inputs()), zeta=g.zeta)

    def is_acyclic(self) -> bool:
        return self.topological_order() is not None

    def topological_order(self) -> list[int] | None:
        nu = len(self.gates)
        indeg = [len(g.inputs()) for g in self.gates]
        users: list[list[int]] = [[] for _ in range(nu)]
        for i, g in enumerate(self.gates):
            for x in g.inputs():
                users[x].append(i)
        ready = [i for i in range(nu) if indeg[i] == 0]
        order = []
        while ready:
            i = ready.pop()
            order.append(i)
            for u in users[i]:
                indeg[u] -= 1
                if indeg[u] == 0:
                    ready.append(u)
        return order if len(order) == nu else None


# -- checking ----------------------------------------------------------------


@dataclass(frozen=True)
class CheckReport:
    satisfied: bool
    max_violation: object
    violations: tuple
    witnesses: tuple[int, ...]


def check_assignment(circuit: GeneralizedCircuit, values: Sequence, eps) -> CheckReport:
    """Per-gate distance between ``v[i]`` and the gate's target value."""
    if len(values) != len(circuit):
        raise DomainError(f"assignment has {len(values)} values for {len(circuit)} gates")
    for i, x in enumerate(values):
        if x is None:
            raise DomainError(f"gate {i} has no value")
        if not 0 <= x <= 1:
            raise DomainError(f"value {x} of gate {i} outside [0, 1]")
    viol = tuple(abs(values[i] - circuit.eval_gate(i, values)) for i in range(len(circuit)))
    worst = max(viol, default=0)
    witnesses = tuple(i for i, d in enumerate(viol) if d > eps)
    return CheckReport(not witnesses, worst, viol, witnesses)


# -- solvers -------------------------------------------------------------------


@dataclass(frozen=True)
class SolveResult:
    assignment: tuple
    violation: float
    success: bool
    iterations: int = 0


def _vector_eval(circuit: GeneralizedCircuit, X: np.ndarray) -> np.ndarray:
    """Gate targets for a batch of assignments (rows of ``X``)."""
    out = np.empty_like(X)
    for i, g in enumerate(circuit.gates):
        t = g.type
        x = X[:, g.j] if t.arity >= 1 else None
        y = X[:, g.k] if t.arity == 2 else None
        z = float(g.zeta) if g.zeta is not None else None
        if t is GateType.MAX:
            val = np.maximum(x, y)
        elif t is GateType.MIN:
            val = np.minimum(x, y)
        elif t is GateType.ONE:
            val = np.ones(X.shape[0])
        elif t is GateType.CONST:
            val = np.full(X.shape[0], z)
        else:
            val = _raw(t, x, y, z)
        out[:, i] = np.clip(val, 0.0, 1.0)
    return out


def brute_force_solve(circuit: GeneralizedCircuit, h, budget: int = 120_000_000) -> SolveResult:
    """Exhaustive grid search over ``{0, h, 2h, ..., 1}^nu`` minimizing the max violation."""
    h = as_fraction(h)
    steps = int(1 / h)
    if h <= 0 or steps * h != 1:
        raise DomainError("grid resolution must be 1/N for a positive integer N")
    nu = len(circuit)
    if nu == 0:
        return SolveResult((), 0.0, True)
    size = (steps + 1) ** nu
    if size > budget:
        raise ResourceError(f"grid has {size} points, budget is {budget}", count=size)
    grid = np.arange(steps + 1) / steps
    inner = min(nu, max(1, int(math.log(2_000_000) / math.log(steps + 1))))
    tail = np.array(list(itertools.product(grid, repeat=inner))) if inner else np.zeros((1, 0))
    best_val, best_pt = np.inf, None
    for head in itertools.product(range(steps + 1), repeat=nu - inner):
        X = np.empty((tail.shape[0], nu))
        X[:, : nu - inner] = np.array(head) / steps
        X[:, nu - inner :] = tail
        viol = np.max(np.abs(X - _vector_eval(circuit, X)), axis=1)
        idx = int(np.argmin(viol))
        if viol[idx] < best_val:
            best_val, best_pt = float(viol[idx]), X[idx]
    values = tuple(Fraction(round(x * steps), steps) for x in best_pt)
    exact = float(check_assignment(circuit, values, 0).max_violation)
    return SolveResult(values, exact, True)


@dataclass(frozen=True)
class IterateConfig:
    max_iters: int = 200_000
    dampings: tuple = (1.0, 0.5, 0.2, 0.05)
    seed: int = 0
    start: tuple | None = None
    tolerance_floor: float = 1e-13
    patience: int = 500
    polish: bool = True


def _float_target(g: Gate, x: Sequence[float]) -> float:
    t = g.type
    a = x[g.j] if t.arity >= 1 else 0.0
    b = x[g.k] if t.arity == 2 else 0.0
    z = float(g.zeta) if g.zeta is not None else 0.0
    if t is GateType.ONE:
        val = 1.0
    elif t is GateType.CONST:
        val = z
    elif t is GateType.ADD:
        val = a + b
    elif t is GateType.SUB:
        val = a - b
    elif t is GateType.COMPL:
        val = 1.0 - a
    elif t is GateType.TIMES2:
        val = 2.0 * a
    elif t is GateType.MUL:
        val = a * b
    elif t is GateType.SQUARE:
        val = a * a
    elif t is GateType.PHI:
        val = (a + 1.0) * (b + 1.0) / 4.0
    elif t is GateType.COPY:
        val = a
    elif t is GateType.HALF:
        val = a / 2.0
    elif t in (GateType.SCALE, GateType.INT_SCALE):
        val = z * a
    elif t is GateType.INV:
        val = -1.0 + 4.0 / (2.0 + a)
    elif t is GateType.MAX:
        val = max(a, b)
    else:
        val = min(a, b)
    return min(max(val, 0.0), 1.0)


def strongly_connected_components(circuit: GeneralizedCircuit) -> list[list[int]]:
    """Components of the read graph, each listed after every component it reads."""
    nu = len(circuit)
    deps = [circuit.gates[i].inputs() for i in range(nu)]
    index = [-1] * nu
    low = [0] * nu
    on_stack = [False] * nu
    stack: list[int] = []
    out: list[list[int]] = []
    counter = 0
    for root in range(nu):
        if index[root] >= 0:
            continue
        work = [(root, 0)]
        while work:
            v, pos = work.pop()
            if pos == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            recurse = False
            for p in range(pos, len(deps[v])):
                w = deps[v][p]
                if index[w] < 0:
                    work.append((v, p + 1))
                    work.append((w, 0))
                    recurse = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if recurse:
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                out.append(sorted(comp))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
    return out


def iterate_solve(
    circuit: GeneralizedCircuit,
    eps,
    config: IterateConfig | None = None,
    offsets: Mapping[int, float] | None = None,
    fixed: Mapping[int, float] | None = None,
) -> SolveResult:
    """Fixed point of ``x -> F(x)``, ``F_i`` the gate target of ``g_i``.

    Strongly connected components are solved one at a time, upstream first:
    acyclic parts take a single evaluation, cycles get damped iteration
    (trying each damping in turn) and, if that stalls, a bounded
    least-squares polish. ``offsets`` add a constant to gate targets before
    truncation (to build perturbed solutions); ``fixed`` pins gate values.
    """
    config = config or IterateConfig()
    eps_f = float(eps)
    if eps_f <= 0:
        raise DomainError("eps must be positive")
    nu = len(circuit)
    if nu == 0:
        return SolveResult((), 0.0, True)
    off = [0.0] * nu
    for i, d in (offsets or {}).items():
        off[i] = float(d)
    fixed = {i: float(v) for i, v in (fixed or {}).items()}
    rng = np.random.default_rng(config.seed)
    x = list(config.start) if config.start is not None else list(rng.random(nu))
    for i, v in fixed.items():
        x[i] = v
    gates = circuit.gates
    target = max(eps_f, config.tolerance_floor)
    iters = 0

    def f(i):
        if i in fixed:
            return fixed[i]
        return min(max(_float_target(gates[i], x) + off[i], 0.0), 1.0)

    for comp in strongly_connected_components(circuit):
        if len(comp) == 1 and comp[0] not in gates[comp[0]].inputs():
            x[comp[0]] = f(comp[0])
            iters += 1
            continue
        iters += _solve_component(comp, x, f, target, config, rng)
    res = float(max(abs(x[i] - f(i)) for i in range(nu)))
    return SolveResult(tuple(float(v) for v in x), res, res <= eps_f, iters)


def _solve_component(comp, x, f, target, config, rng) -> int:
    start = np.array([x[i] for i in comp])

    def F(v):
        for i, val in zip(comp, v):
            x[i] = val
        return np.array([f(i) for i in comp])

    best_v, best_res, iters = start.copy(), np.inf, 0
    per_run = max(1, config.max_iters // len(config.dampings))
    for eta in config.dampings:
        v = start.copy()
        run_best, stale = np.inf, 0
        for _ in range(per_run):
            iters += 1
            fv = F(v)
            res = float(np.max(np.abs(fv - v)))
            if res < best_res:
                best_res, best_v = res, v.copy()
            if res < 0.999 * run_best:
                run_best, stale = res, 0
            else:
                stale += 1
            if res <= target or stale >= config.patience:
                break
            v = (1 - eta) * v + eta * fv
        if best_res <= target:
            break
        start = rng.random(len(comp))
    if best_res > target and config.polish:
        from scipy.optimize import least_squares

        for attempt in range(4):
            guess = best_v if attempt == 0 else rng.random(len(comp))
            sol = least_squares(
                lambda v: v - F(v), guess, bounds=(0.0, 1.0), xtol=1e-15, ftol=1e-15, gtol=1e-15
            )
            v = np.clip(sol.x, 0.0, 1.0)
            iters += int(sol.nfev)
            for _ in range(config.patience):
                iters += 1
                fv = F(v)
                res = float(np.max(np.abs(fv - v)))
                if res < best_res:
                    best_res, best_v = res, v.copy()
                if res <= target:
                    break
                v = 0.5 * v + 0.5 * fv
            if best_res <= target:
                break
    if best_res > target:
        best_v, best_res, n = _extrapolate(best_v, best_res, F, target)
        iters += n
    F(best_v)
    return iters


_STRETCH = 2.0 ** np.arange(1, 41)


def _extrapolate(v, res, F, target, rounds: int = 80):
    """Long steps ``v + k (F(v) - v)`` for tangent fixed points.

    Near a double root the step shrinks quadratically with the distance, so
    damped iteration and least squares crawl; a geometric search over ``k``
    recovers a constant-factor reduction per round.
    """
    evals = 0
    for _ in range(rounds):
        if res <= target:
            break
        d = F(v) - v
        evals += 1
        best = None
        for k in _STRETCH:
            cand = np.clip(v + k * d, 0.0, 1.0)
            r = float(np.max(np.abs(F(cand) - cand)))
            evals += 1
            if best is None or r < best[1]:
                best = (cand, r)
        if best[1] >= res:
            break
        v, res = best
    return v, res, evals


# -- text formats ----------------------------------------------------------------


def format_circuit(circuit: GeneralizedCircuit) -> str:
    lines = []
    for i, g in enumerate(circuit.gates):
        parts = [str(i), g.type.label] + [str(x) for x in g.inputs()]
        if g.type.has_param:
            z = as_fraction(g.zeta)
            parts.append(f"zeta={z.numerator}/{z.denominator}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


def parse_circuit(text: str, gate_set: Iterable[GateType] | None = None) -> GeneralizedCircuit:
    """Parse ``i TYPE j [k] [zeta=num/den]`` lines; ``#`` starts a comment."""
    gates: dict[int, Gate] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            idx = int(tokens[0])
            t = GateType.from_label(tokens[1])
            zeta = None
            ins = []
            for tok in tokens[2:]:
                if tok.startswith("zeta="):
                    zeta = as_fraction(tok[5:])
                else:
                    ins.append(int(tok))
        except (IndexError, ValueError, StructureError, DomainError) as exc:
            raise StructureError(f"line {lineno}: {exc}") from exc
        if len(ins) != t.arity:
            raise StructureError(f"line {lineno}: {t.label} takes {t.arity} inputs, got {len(ins)}")
        if idx in gates:
            raise StructureError(f"line {lineno}: gate {idx} defined twice")
        ins += [None] * (2 - len(ins))
        gates[idx] = Gate(t, ins[0], ins[1], zeta)
    if sorted(gates) != list(range(len(gates))):
        raise StructureError("gate indices must be 0..nu-1")
    return GeneralizedCircuit(
        tuple(gates[i] for i in range(len(gates))),
        frozenset(gate_set) if gate_set is not None else ALL_GATES,
    )


def format_assignment(values: Sequence) -> str:
    out = []
    for i, x in enumerate(values):
        q = as_fraction(x)
        out.append(f"{i} {q.numerator}/{q.denominator}")
    return "\n".join(out) + ("\n" if out else "")


def parse_assignment(text: str, size: int | None = None) -> list[Fraction]:
    values: dict[int, Fraction] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            idx_s, val_s = line.split()
            values[int(idx_s)] = as_fraction(val_s)
        except (ValueError, DomainError) as exc:
            raise StructureError(f"line {lineno}: expected 'index value'") from exc
    count = size if size is not None else len(values)
    missing = [i for i in range(count) if i not in values]
    if missing:
        raise DomainError(f"no value for gates {missing}")
    return [values[i] for i in range(count)]
