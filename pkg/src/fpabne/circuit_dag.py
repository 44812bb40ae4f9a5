"""Straight-line arithmetic circuits, and the export of the map ``G`` as one.

Nodes use the operations ``+ - * max min``, rational constants and inputs
(``/`` is accepted by the evaluator and parser but never emitted). Identical
nodes are shared and operations on constants are folded exactly, so the node
count reflects the work the unrolled computation actually needs.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .auction import AuctionInstance
from .distributions import PiecewiseCdf, poly_eval
from .errors import DomainError, ResourceError, StructureError
from .rational import as_fraction

__all__ = ["CircuitDag", "DagBuilder", "export_circuit", "parse_dag", "OPS", "DEFAULT_NODE_BUDGET"]

OPS = ("input", "const", "+", "-", "*", "/", "max", "min")
_BINARY = {"+", "-", "*", "/", "max", "min"}
DEFAULT_NODE_BUDGET = 1_000_000


def _apply(op: str, a, b):
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return a / b
    if op == "max":
        return max(a, b)
    return min(a, b)


_NUMPY = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide, "max": np.maximum, "min": np.minimum}


@dataclass(frozen=True)
class CircuitDag:
    """``nodes[i] = (op, operands, payload)``; payload is the constant or input index."""

    nodes: tuple
    outputs: tuple[int, ...]
    num_inputs: int

    def __post_init__(self) -> None:
        for i, (op, args, payload) in enumerate(self.nodes):
            if op not in OPS:
                raise StructureError(f"node {i}: unknown op {op!r}")
            if any(not 0 <= a < i for a in args):
                raise StructureError(f"node {i}: operands must refer to earlier nodes")
            if (op in _BINARY) != (len(args) == 2):
                raise StructureError(f"node {i}: {op} has {len(args)} operands")
            if op == "input" and not 0 <= payload < self.num_inputs:
                raise StructureError(f"node {i}: input index {payload} out of range")
        if any(not 0 <= o < len(self.nodes) for o in self.outputs):
            raise StructureError("output refers to a missing node")

    def __len__(self) -> int:
        return len(self.nodes)

    def ops_used(self) -> set[str]:
        return {op for op, _, _ in self.nodes}

    def evaluate(self, inputs: Sequence, exact: bool | None = None) -> list:
        """Evaluate at one point; rational inputs are evaluated exactly."""
        if len(inputs) != self.num_inputs:
            raise DomainError(f"expected {self.num_inputs} inputs, got {len(inputs)}")
        if exact is None:
            exact = all(isinstance(x, (int, Fraction)) for x in inputs)
        xs = [as_fraction(x) for x in inputs] if exact else [float(x) for x in inputs]
        vals: list = []
        for op, args, payload in self.nodes:
            if op == "input":
                vals.append(xs[payload])
            elif op == "const":
                vals.append(payload if exact else float(payload))
            else:
                vals.append(_apply(op, vals[args[0]], vals[args[1]]))
        return [vals[o] for o in self.outputs]

    def evaluate_batch(self, X: np.ndarray) -> np.ndarray:
        """Float evaluation of many points at once (rows of ``X``)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        vals: list = []
        for op, args, payload in self.nodes:
            if op == "input":
                vals.append(X[:, payload])
            elif op == "const":
                vals.append(np.full(X.shape[0], float(payload)))
            else:
                vals.append(_NUMPY[op](vals[args[0]], vals[args[1]]))
        return np.stack([vals[o] for o in self.outputs], axis=1) if self.outputs else np.zeros((X.shape[0], 0))

    def to_text(self) -> str:
        lines = [f"inputs: {self.num_inputs}"]
        for i, (op, args, payload) in enumerate(self.nodes):
            if op == "const":
                lines.append(f"{i} const {payload.numerator}/{payload.denominator}")
            elif op == "input":
                lines.append(f"{i} input {payload}")
            else:
                lines.append(f"{i} {op} {args[0]} {args[1]}")
        lines.append("outputs: " + " ".join(str(o) for o in self.outputs))
        return "\n".join(lines) + "\n"


def parse_dag(text: str) -> CircuitDag:
    nodes, outputs, num_inputs = [], None, None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            if line.startswith("inputs:"):
                num_inputs = int(line.split(":", 1)[1])
                continue
            if line.startswith("outputs:"):
                outputs = tuple(int(t) for t in line.split(":", 1)[1].split())
                continue
            tokens = line.split()
            idx, op = int(tokens[0]), tokens[1]
            if idx != len(nodes):
                raise StructureError(f"expected node {len(nodes)}, got {idx}")
            if op == "const":
                nodes.append(("const", (), as_fraction(tokens[2])))
            elif op == "input":
                nodes.append(("input", (), int(tokens[2])))
            else:
                nodes.append((op, (int(tokens[2]), int(tokens[3])), None))
        except (IndexError, ValueError) as exc:
            raise StructureError(f"line {lineno}: {exc}") from exc
    if outputs is None or num_inputs is None:
        raise StructureError("missing 'inputs:' or 'outputs:' line")
    return CircuitDag(tuple(nodes), outputs, num_inputs)


class DagBuilder:
    """Hash-consing builder with exact constant folding."""

    def __init__(self, num_inputs: int, budget: int = DEFAULT_NODE_BUDGET):
        self.nodes: list = []
        self._index: dict = {}
        self.num_inputs = num_inputs
        self.budget = budget

    def _add(self, key) -> int:
        idx = self._index.get(key)
        if idx is None:
            if len(self.nodes) >= self.budget:
                raise ResourceError(f"circuit exceeds the node budget of {self.budget}", count=len(self.nodes))
            idx = len(self.nodes)
            self.nodes.append(key)
            self._index[key] = idx
        return idx

    def const(self, q) -> int:
        return self._add(("const", (), as_fraction(q)))

    def input(self, k: int) -> int:
        return self._add(("input", (), k))

    def value(self, idx: int):
        """The constant held by node ``idx``, or None."""
        op, _, payload = self.nodes[idx]
        return payload if op == "const" else None

    def op(self, op: str, a: int, b: int) -> int:
        ca, cb = self.value(a), self.value(b)
        if ca is not None and cb is not None:
            return self.const(_apply(op, ca, cb))
        if op == "+":
            if ca == 0:
                return b
            if cb == 0:
                return a
        elif op == "-":
            if cb == 0:
                return a
            if a == b:
                return self.const(0)
        elif op == "*":
            if ca == 0 or cb == 0:
                return self.const(0)
            if ca == 1:
                return b
            if cb == 1:
                return a
        elif op in ("max", "min") and a == b:
            return a
        if op in ("+", "*", "max", "min") and a > b:
            a, b = b, a  # canonical order for commutative ops
        return self._add((op, (a, b), None))

    def add(self, a, b):
        return self.op("+", a, b)

    def sub(self, a, b):
        return self.op("-", a, b)

    def mul(self, a, b):
        return self.op("*", a, b)

    def max(self, a, b):
        return self.op("max", a, b)

    def min(self, a, b):
        return self.op("min", a, b)

    def build(self, outputs: Sequence[int]) -> CircuitDag:
        return CircuitDag(tuple(self.nodes), tuple(outputs), self.num_inputs)


def _poly(b: DagBuilder, coeffs: Sequence[Fraction], x: int) -> int:
    acc = b.const(0)
    for c in reversed(coeffs):
        acc = b.add(b.mul(acc, x), b.const(c))
    return acc


def _cdf(b: DagBuilder, F: PiecewiseCdf, x: int) -> int:
    """``F(x)`` as a telescoping sum of per-piece values at clamped arguments.

    For ``x`` in piece ``L`` the pieces before ``L`` contribute their full
    increments, piece ``L`` contributes up to ``x`` and later pieces nothing.
    """
    cx = b.value(x)
    if cx is not None:
        return b.const(F(cx))
    acc = None
    for l in range(F.num_pieces):
        lo, hi, coeffs = F.piece(l)
        clamped = b.min(b.max(x, b.const(lo)), b.const(hi))
        term = _poly(b, coeffs, clamped)
        if acc is None:
            acc = term
        else:
            acc = b.add(acc, b.sub(term, b.const(poly_eval(coeffs, lo))))
    return acc


def export_circuit(instance: AuctionInstance, budget: int = DEFAULT_NODE_BUDGET) -> CircuitDag:
    """Circuit computing ``G`` on the flattened free jump points.

    Input ``i * m + (j - 1)`` is ``alpha_i(b_{j-1})``; outputs follow the same
    layout. The circuit assumes its input lies in the domain, as ``G`` does.
    """
    n, m = instance.n, instance.m
    b = DagBuilder(n * m, budget)
    one = b.const(1)
    alpha = [[b.input(i * m + j) for j in range(m)] + [one] for i in range(n)]
    bids = [b.const(x) for x in instance.bids]
    cdf_cache: dict = {}

    def F(i, j, k):
        key = (i, j, k)
        if key not in cdf_cache:
            cdf_cache[key] = _cdf(b, instance.priors[i][j], alpha[j][k])
        return cdf_cache[key]

    outputs = []
    for i in range(n):
        H = []
        for k in range(instance.num_bids):
            table = [one]
            for j in range(n):
                if j == i:
                    continue
                hi = F(i, j, k)
                below = F(i, j, k - 1) if k > 0 else b.const(0)
                tie = b.sub(hi, below)
                nxt = [b.mul(table[0], below)]
                for t in range(1, len(table)):
                    nxt.append(b.add(b.mul(table[t - 1], tie), b.mul(table[t], below)))
                nxt.append(b.mul(table[-1], tie))
                table = nxt
            h = table[0]
            for t in range(1, len(table)):
                h = b.add(h, b.mul(table[t], b.const(Fraction(1, t + 1))))
            H.append(h)
        prev = None
        for j in range(1, m + 1):
            v = alpha[i][j - 1]
            own = b.mul(b.sub(v, bids[j - 1]), H[j - 1])
            best = None
            for ell in range(j, m + 1):
                u = b.mul(b.sub(v, bids[ell]), H[ell])
                best = u if best is None else b.max(best, u)
            moved = b.add(v, b.sub(own, best))
            lo = bids[j] if prev is None else b.max(bids[j], prev)
            x = b.min(b.max(moved, lo), one)
            outputs.append(x)
            prev = x
    return b.build(outputs)
