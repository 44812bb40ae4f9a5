"""JSON file formats for instances and strategy profiles.

Every number is written as a ``"num/den"`` string so files round-trip
exactly. Readers also accept integers, decimal strings and plain JSON numbers
(converted exactly, never through rounding).

Instance::

    {"bids": ["0", "1/2"], "n": 3, "prior": "uniform"}
    {"bids": [...], "priors": [[null, P01, ...], [P10, null, ...], ...]}

A prior ``P`` is ``"uniform"``, ``{"breakpoints": [...], "coefficients": [[...], ...]}``
(coefficients per piece in the global coordinate) or
``{"blocks": [{"interval": [lo, hi], "volume": v}, ...]}``.

Strategy::

    {"jumps": [["a", "1/1"], ...]}   # alpha_i(b_k) for every bidder and bid
"""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Any

from .auction import AuctionInstance, StrategyProfile
from .distributions import PiecewiseCdf
from .errors import DomainError, StructureError
from .rational import as_fraction, fraction_text

__all__ = [
    "parse_instance",
    "serialize_instance",
    "parse_strategy",
    "serialize_strategy",
    "prior_to_json",
    "prior_from_json",
    "dump_json",
]


def dump_json(obj: Any) -> str:
    """Deterministic JSON text (sorted keys, fixed indentation)."""
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _load(text: str, what: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise StructureError(f"{what}: syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _number(x, where: str) -> Fraction:
    if isinstance(x, bool) or not isinstance(x, (int, float, str)):
        raise StructureError(f"{where}: expected a number, got {x!r}")
    try:
        return as_fraction(x)
    except (DomainError, ValueError, ZeroDivisionError) as exc:
        raise StructureError(f"{where}: {exc}") from exc


def _field(doc: dict, key: str, what: str):
    if not isinstance(doc, dict):
        raise StructureError(f"{what}: expected an object")
    if key not in doc:
        raise StructureError(f"{what}: missing field {key!r}")
    return doc[key]


def prior_from_json(doc, where: str = "prior") -> PiecewiseCdf:
    if doc == "uniform":
        return PiecewiseCdf.uniform()
    if not isinstance(doc, dict):
        raise StructureError(f"{where}: expected 'uniform' or an object")
    if "blocks" in doc:
        blocks = []
        for n, blk in enumerate(doc["blocks"]):
            lo, hi = _field(blk, "interval", f"{where} block {n}")
            blocks.append(((_number(lo, where), _number(hi, where)), _number(_field(blk, "volume", where), where)))
        return PiecewiseCdf.from_blocks(blocks)
    bps = [_number(x, f"{where} breakpoints") for x in _field(doc, "breakpoints", where)]
    coeffs = [[_number(c, f"{where} coefficients") for c in piece] for piece in _field(doc, "coefficients", where)]
    return PiecewiseCdf(tuple(bps), tuple(tuple(c) for c in coeffs))


def prior_to_json(F: PiecewiseCdf) -> dict:
    return {
        "breakpoints": [fraction_text(x) for x in F.breakpoints],
        "coefficients": [[fraction_text(c) for c in piece] for piece in F.coefficients],
    }


def parse_instance(text: str) -> AuctionInstance:
    """Parse and validate an instance file (every prior is checked)."""
    doc = _load(text, "instance")
    bids = [_number(b, "bids") for b in _field(doc, "bids", "instance")]
    if "priors" in doc:
        rows = []
        for i, row in enumerate(doc["priors"]):
            rows.append(
                tuple(None if i == j else prior_from_json(p, f"prior ({i}, {j})") for j, p in enumerate(row))
            )
        return AuctionInstance(tuple(bids), tuple(rows))
    n = _field(doc, "n", "instance")
    if isinstance(n, bool) or not isinstance(n, int):
        raise StructureError("instance: 'n' must be an integer")
    prior = prior_from_json(_field(doc, "prior", "instance"))
    return AuctionInstance.symmetric(n, bids, prior)


def serialize_instance(instance: AuctionInstance) -> str:
    doc: dict = {"bids": [fraction_text(b) for b in instance.bids]}
    distinct = instance.distinct_priors()
    if len(distinct) == 1:
        doc["n"] = instance.n
        doc["prior"] = prior_to_json(distinct[0])
    else:
        doc["priors"] = [
            [None if i == j else prior_to_json(instance.priors[i][j]) for j in range(instance.n)]
            for i in range(instance.n)
        ]
    return dump_json(doc)


def parse_strategy(text: str) -> StrategyProfile:
    doc = _load(text, "strategy")
    rows = _field(doc, "jumps", "strategy")
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise StructureError("strategy: 'jumps' must be a list of lists")
    return StrategyProfile(tuple(tuple(_number(x, f"jumps[{i}]") for x in row) for i, row in enumerate(rows)))


def serialize_strategy(profile: StrategyProfile) -> str:
    rows = [[fraction_text(as_fraction(x)) for x in row] for row in profile.jumps]
    return dump_json({"jumps": rows})
