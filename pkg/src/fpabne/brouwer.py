"""The continuous self-map ``G`` of the jump-point domain whose fixed points
are exactly the equilibria, plus a damped fixed-point solver built on it.

A domain point holds the ``m = |B| - 1`` free jump points of every bidder
(the jump at the highest bid is always 1). It is monotone in the bid index and
never overbids: ``point[i][j-1] >= bids[j]``.

``G`` moves each jump ``alpha_i(b_{j-1})`` by the gap between the utility of
bidding ``b_{j-1}`` at that value and the best utility of any higher bid, then
truncates back into the domain, sweeping ``j = 1..m`` in order.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Sequence

import numpy as np

from .auction import AuctionInstance, FloatEngine, StrategyProfile, verify_epsilon_bne, win_probs
from .distributions import continuity_delta
from .errors import DomainError, PreconditionError
from .rational import as_fraction

__all__ = [
    "SolverConfig",
    "FixedPointResult",
    "domain_violations",
    "point_to_profile",
    "profile_to_point",
    "delta_gap",
    "brouwer_map",
    "residual",
    "random_domain_point",
    "solve_fixed_point",
]

log = logging.getLogger(__name__)


def _is_exact(point) -> bool:
    if isinstance(point, np.ndarray):
        return False
    return all(isinstance(x, Rational) for row in point for x in row)


def domain_violations(instance: AuctionInstance, point) -> list[str]:
    """Broken domain conditions of a point (shape, monotone, no-overbidding)."""
    m, n = instance.m, instance.n
    rows = [list(r) for r in point]
    if len(rows) != n or any(len(r) != m for r in rows):
        return [f"point must have shape ({n}, {m})"]
    exact = _is_exact(point)
    bids = instance.bids if exact else [float(b) for b in instance.bids]
    out = []
    for i, row in enumerate(rows):
        prev = 0
        for j, x in enumerate(row, start=1):
            if x < prev:
                out.append(f"bidder {i}: coordinate {j} decreases")
            if x < bids[j]:
                out.append(f"bidder {i}: coordinate {j} = {x} below bid {bids[j]}")
            if x > 1:
                out.append(f"bidder {i}: coordinate {j} = {x} above 1")
            prev = x
    return out


def _require_domain(instance, point) -> None:
    problems = domain_violations(instance, point)
    if problems:
        raise PreconditionError("point is outside the domain: " + "; ".join(problems), problems)


def point_to_profile(instance: AuctionInstance, point) -> StrategyProfile:
    one = Fraction(1) if _is_exact(point) else 1.0
    return StrategyProfile(tuple(tuple(row) + (one,) for row in point))


def profile_to_point(profile: StrategyProfile):
    """Drop the fixed final jump; returns nested tuples (exact) or an array."""
    if profile.is_exact:
        return tuple(row[:-1] for row in profile.jumps)
    return profile.to_array()[:, :-1]


def _utilities_at(bids, H, v, start):
    return [(v - bids[ell]) * H[ell] for ell in range(start, len(bids))]


def delta_gap(instance: AuctionInstance, point, i: int, j: int):
    """Utility of ``b_{j-1}`` at value ``alpha_i(b_{j-1})`` minus the best higher bid."""
    if not 1 <= j <= instance.m:
        raise DomainError(f"coordinate index {j} outside 1..{instance.m}")
    if not 0 <= i < instance.n:
        raise DomainError(f"bidder {i} out of range")
    _require_domain(instance, point)
    exact = _is_exact(point)
    profile = point_to_profile(instance, point)
    H = win_probs(instance, i, profile, exact)
    bids = list(instance.bids) if exact else [float(b) for b in instance.bids]
    v = profile.jumps[i][j - 1]
    own = (v - bids[j - 1]) * H[j - 1]
    return own - max(_utilities_at(bids, H, v, j))


def brouwer_map(instance: AuctionInstance, point, check: bool = True):
    """Apply ``G`` once. Rational points map exactly; arrays map in float64."""
    if check:
        _require_domain(instance, point)
    if isinstance(point, np.ndarray):
        return _map_float(FloatEngine.for_instance(instance), point)
    exact = _is_exact(point)
    profile = point_to_profile(instance, point)
    bids = list(instance.bids) if exact else [float(b) for b in instance.bids]
    one = Fraction(1) if exact else 1.0
    out = []
    for i in range(instance.n):
        H = win_probs(instance, i, profile, exact)
        row = profile.jumps[i]
        new_row = []
        floor_prev = 0
        for j in range(1, instance.m + 1):
            v = row[j - 1]
            gap = (v - bids[j - 1]) * H[j - 1] - max(_utilities_at(bids, H, v, j))
            lo = max(bids[j], floor_prev)
            x = min(max(v + gap, lo), one)
            new_row.append(x)
            floor_prev = x
        out.append(tuple(new_row))
    return tuple(out)


def _map_float(engine: FloatEngine, point: np.ndarray) -> np.ndarray:
    n, m = point.shape
    bids = engine.bids
    A = np.empty((n, m + 1))
    A[:, :m] = point
    A[:, m] = 1.0
    H = engine.win_probs(A)
    out = np.empty_like(point)
    prev = np.zeros(n)
    for j in range(1, m + 1):
        v = point[:, j - 1]
        own = (v - bids[j - 1]) * H[:, j - 1]
        higher = (v[:, None] - bids[None, j:]) * H[:, j:]
        gap = own - higher.max(axis=1)
        lo = np.maximum(bids[j], prev)
        x = np.minimum(np.maximum(v + gap, lo), 1.0)
        out[:, j - 1] = x
        prev = x
    return out


def residual(instance: AuctionInstance, point):
    """Sup-norm distance between ``G(point)`` and ``point``."""
    image = brouwer_map(instance, point)
    if isinstance(point, np.ndarray):
        return float(np.max(np.abs(image - point), initial=0.0))
    return max((abs(a - b) for ra, rb in zip(image, point) for a, b in zip(ra, rb)), default=0)


def random_domain_point(instance: AuctionInstance, rng: np.random.Generator) -> np.ndarray:
    """Sorted uniforms per bidder, raised to the no-overbidding floor."""
    n, m = instance.n, instance.m
    pts = np.sort(rng.random((n, m)), axis=1)
    floor = instance.float_bids[1:]
    pts = np.maximum(pts, floor[None, :])
    return np.maximum.accumulate(pts, axis=1) if m else pts


@dataclass(frozen=True)
class SolverConfig:
    damping: float = 0.5
    max_iters: int = 100_000
    restarts: int = 32
    seed: int = 0
    check_every: int = 25
    patience: int = 2000
    time_limit: float | None = None


@dataclass(frozen=True)
class FixedPointResult:
    profile: StrategyProfile
    residual: float
    certified: bool
    max_regret: float
    iterations: int
    restarts_used: int
    delta: float
    trace: tuple = field(default=(), repr=False)


def solve_fixed_point(instance: AuctionInstance, eps, config: SolverConfig | None = None) -> FixedPointResult:
    """Damped iteration ``x <- (1 - eta) x + eta G(x)`` from random starts.

    A run stops once the residual drops below the continuity radius for
    ``eps / 16m``, or when the residual has stopped improving for
    ``patience`` iterations (float round-off puts a floor under it that can
    exceed that radius). The image ``G(x)`` of the best iterate is then
    handed to the verifier; restarts continue until it certifies at ``eps``.
    Budget exhaustion is reported through ``certified=False``.
    """
    config = config or SolverConfig()
    eps_q = as_fraction(eps)
    if eps_q < 0:
        raise DomainError("eps must be non-negative")
    n, m = instance.n, instance.m
    if m == 0:  # a single bid: everyone bids 0, an exact equilibrium
        profile = StrategyProfile(tuple((Fraction(1),) for _ in range(n)))
        return FixedPointResult(profile, 0.0, True, 0.0, 0, 0, 1.0)
    if eps_q == 0:
        raise DomainError("eps must be positive when there is more than one bid")
    target = eps_q / (16 * m)
    delta = float(min(continuity_delta(instance, target), target))
    eps_f = float(eps_q)
    engine = FloatEngine.for_instance(instance)
    rng = np.random.default_rng(config.seed)
    eta = config.damping
    started = time.monotonic()
    best = None  # (certified, -regret, -residual) ordering via tuple below
    total_iters = 0
    trace = []

    def consider(x, res, restart):
        nonlocal best
        image = _map_float(engine, x)
        report = verify_epsilon_bne(instance, StrategyProfile.from_array(_with_top(image)), eps_f)
        cand = (report.is_eq, -float(report.max_regret), -res, -restart, image, report)
        if best is None or cand[:4] > best[:4]:
            best = cand
        return report.is_eq

    for restart in range(config.restarts):
        x = random_domain_point(instance, rng)
        best_res, best_x, stale = np.inf, x, 0
        for it in range(1, config.max_iters + 1):
            gx = _map_float(engine, x)
            res = float(np.max(np.abs(gx - x)))
            total_iters += 1
            if res < best_res:
                if res < 0.999 * best_res:
                    stale = 0
                best_res, best_x = res, x
            else:
                stale += 1
            if res <= delta or stale >= config.patience:
                break
            if it % config.check_every == 0:
                trace.append((restart, it, res))
                if config.time_limit and time.monotonic() - started > config.time_limit:
                    break
            x = (1.0 - eta) * x + eta * gx
        done = consider(best_x, best_res, restart)
        log.info("restart %d: residual %.3e certified=%s", restart, best_res, done)
        if done or (config.time_limit and time.monotonic() - started > config.time_limit):
            break
    certified, neg_regret, neg_res, neg_restart, image, _ = best
    profile = StrategyProfile.from_array(_with_top(image))
    return FixedPointResult(
        profile, -neg_res, certified, -neg_regret, total_iters, -neg_restart + 1, delta, tuple(trace)
    )


def _with_top(point: np.ndarray) -> np.ndarray:
    return np.hstack([point, np.ones((point.shape[0], 1))])
