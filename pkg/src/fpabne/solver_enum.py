"""Equilibria of small auctions by enumerating combinatorial guesses.

A guess fixes, for each bidder, which bids are used on an interval of
positive length (the lowest bid always is) and which prior piece each
resulting boundary falls in. Under a guess every interim utility at a
boundary is a polynomial in the boundaries, so equilibrium becomes a
polynomial system: boundary ordering, piece membership, no-overbidding and
best-response inequalities at both ends of every used interval, with
indifference equalities at the boundaries.

Systems are solved numerically (bounded least squares from several starts).
Nothing is trusted until the projected profile passes the exact verifier.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np
from scipy.optimize import least_squares

from .auction import AuctionInstance, StrategyProfile, tie_polynomial, verify_epsilon_bne
from .distributions import continuity_delta
from .errors import DomainError, ResourceError, StructureError
from .polynomial import CompiledPolys, Poly
from .rational import as_fraction

__all__ = [
    "Guess",
    "PolySystem",
    "SystemSolution",
    "EnumConfig",
    "GuessReport",
    "EnumResult",
    "refined_breakpoints",
    "count_interval_assignments",
    "enumerate_guesses",
    "build_system",
    "solve_system_numeric",
    "project_to_domain",
    "solve_constant_size",
]

log = logging.getLogger(__name__)

DEFAULT_TAU = 1e-9


def refined_breakpoints(instance: AuctionInstance, j: int) -> tuple[Fraction, ...]:
    """Union of the breakpoints of every prior held about bidder ``j``."""
    pts = set()
    for i in range(instance.n):
        if i != j:
            pts.update(instance.priors[i][j].breakpoints)
    return tuple(sorted(pts))


def _monotone_sequences(length: int, pieces: int) -> list[tuple[int, ...]]:
    return list(itertools.combinations_with_replacement(range(pieces), length))


def count_interval_assignments(instance: AuctionInstance) -> int:
    """Non-decreasing piece assignments of all ``n * m`` free jump points."""
    total = 1
    for j in range(instance.n):
        K = len(refined_breakpoints(instance, j)) - 1
        total *= math.comb(K + instance.m - 1, instance.m)
    return total


@dataclass(frozen=True)
class Guess:
    """``used[i]``: bids with a non-empty interval for bidder ``i`` (always
    starting with 0); ``pieces[i][s]``: refined piece holding the boundary
    where bidder ``i`` switches into ``used[i][s + 1]``."""

    used: tuple[tuple[int, ...], ...]
    pieces: tuple[tuple[int, ...], ...]

    @property
    def num_jumps(self) -> int:
        return sum(len(p) for p in self.pieces)

    def variables(self) -> list[tuple[int, int]]:
        """``(bidder, s)`` for each effective boundary, in variable order."""
        return [(i, s) for i, p in enumerate(self.pieces) for s in range(len(p))]

    def interval_assignment(self, instance: AuctionInstance) -> tuple[tuple[int, ...], ...]:
        """Piece of every free jump ``alpha_i(b_t)``, ``t < m``, under this guess."""
        out = []
        for i, (used, pieces) in enumerate(zip(self.used, self.pieces)):
            last = len(refined_breakpoints(instance, i)) - 2
            row = []
            for t in range(instance.m):
                s = _boundary_after(used, t)
                row.append(last if s is None else pieces[s])
            out.append(tuple(row))
        return tuple(out)


def _boundary_after(used: Sequence[int], t: int) -> int | None:
    """Index ``s`` of the boundary giving ``alpha(b_t)``: the switch into the
    smallest used bid above ``t``; None when no used bid lies above ``t``."""
    for s, e in enumerate(used[1:]):
        if e > t:
            return s
    return None


def enumerate_guesses(instance: AuctionInstance, max_guesses: int = 200_000) -> Iterator[Guess]:
    """All guesses, fewest boundaries first, then in lexicographic order."""
    m = instance.m
    per_bidder = []
    for i in range(instance.n):
        bps = refined_breakpoints(instance, i)
        K = len(bps) - 1
        options = []
        for r in range(m + 1):
            for above in itertools.combinations(range(1, m + 1), r):
                used = (0,) + above
                for seq in _monotone_sequences(r, K):
                    # the boundary into bid e must be able to reach b_e
                    if all(bps[p + 1] >= instance.bids[e] for p, e in zip(seq, above)):
                        options.append((used, seq))
        per_bidder.append(options)
    total = math.prod(len(o) for o in per_bidder)
    if total > max_guesses:
        raise ResourceError(f"{total} guesses exceed the budget of {max_guesses}", count=total)
    combos = itertools.product(*per_bidder)
    ordered = sorted(combos, key=lambda c: (sum(len(seq) for _, seq in c), c))
    for combo in ordered:
        yield Guess(tuple(u for u, _ in combo), tuple(s for _, s in combo))


# -- systems -------------------------------------------------------------------------


@dataclass(frozen=True)
class Constraint:
    kind: str  # "order", "overbid", "best-response", "indifference"
    poly: Poly  # equality: poly == 0; otherwise poly >= 0
    equality: bool = False
    label: str = ""


@dataclass(frozen=True)
class PolySystem:
    guess: Guess
    nvars: int
    lower: tuple[Fraction, ...]  # box from piece membership and no-overbidding
    upper: tuple[Fraction, ...]
    constraints: tuple[Constraint, ...]
    tau: float = DEFAULT_TAU

    def equalities(self) -> list[Constraint]:
        return [c for c in self.constraints if c.equality]

    def box_empty(self) -> bool:
        return any(lo > hi for lo, hi in zip(self.lower, self.upper))


def _cdf_poly(instance, i, j, guess, var_index, t, nvars):
    """``F_{i,j}(alpha_j(b_t))`` as a polynomial under ``guess``."""
    F = instance.priors[i][j]
    s = _boundary_after(guess.used[j], t)
    if s is None:
        return Poly.const(nvars, 1)
    bps = refined_breakpoints(instance, j)
    p = guess.pieces[j][s]
    mid = (bps[p] + bps[p + 1]) / 2
    coeffs = F.coefficients[F.piece_index(mid)]
    return Poly.univariate(nvars, var_index[(j, s)], coeffs)


def win_prob_polys(instance: AuctionInstance, guess: Guess, i: int) -> list[Poly]:
    """``H_i(b_k)`` for every bid as polynomials in the guess variables."""
    var_index = {v: n for n, v in enumerate(guess.variables())}
    nvars = len(var_index)
    one = Poly.const(nvars, 1)
    zero = Poly.const(nvars, 0)
    out = []
    for k in range(instance.num_bids):
        G, g = [], []
        for j in range(instance.n):
            if j == i:
                continue
            hi = _cdf_poly(instance, i, j, guess, var_index, k, nvars)
            lo = _cdf_poly(instance, i, j, guess, var_index, k - 1, nvars) if k > 0 else zero
            G.append(lo)
            g.append(hi - lo)
        table = tie_polynomial(G, g, one)
        h = table[0]
        for t in range(1, len(table)):
            h = h + table[t] * Fraction(1, t + 1)
        out.append(h)
    return out


def build_system(instance: AuctionInstance, guess: Guess, tau: float = DEFAULT_TAU) -> PolySystem:
    """Polynomial constraints that make the guessed structure an equilibrium."""
    if len(guess.used) != instance.n or len(guess.pieces) != instance.n:
        raise StructureError("guess does not match the number of bidders")
    variables = guess.variables()
    var_index = {v: n for n, v in enumerate(variables)}
    nvars = len(variables)
    bids = instance.bids
    lower, upper, cons = [], [], []
    for i, (used, pieces) in enumerate(zip(guess.used, guess.pieces)):
        if used[0] != 0 or list(used) != sorted(set(used)) or len(pieces) != len(used) - 1:
            raise StructureError(f"bidder {i}: inconsistent guess {used} / {pieces}")
        if list(pieces) != sorted(pieces):
            raise StructureError(f"bidder {i}: piece order contradicts monotone jumps")
        bps = refined_breakpoints(instance, i)
        for s, p in enumerate(pieces):
            if not 0 <= p < len(bps) - 1:
                raise StructureError(f"bidder {i}: piece {p} out of range")
            lower.append(max(bps[p], bids[used[s + 1]]))
            upper.append(bps[p + 1])
    for i, (used, pieces) in enumerate(zip(guess.used, guess.pieces)):
        H = win_prob_polys(instance, guess, i)
        r = len(pieces)
        z = [Poly.const(nvars, 0)] + [Poly.var(nvars, var_index[(i, s)]) for s in range(r)] + [Poly.const(nvars, 1)]
        for s in range(r + 1):
            if s >= 1:
                cons.append(Constraint("order", z[s] - z[s - 1], label=f"bidder {i}: boundary {s} after {s - 1}"))
            if s == r and r >= 1:
                cons.append(Constraint("order", z[r + 1] - z[r], label=f"bidder {i}: boundary {r} below 1"))
        # interval s of bidder i is (z[s], z[s+1]] and carries bid used[s]
        for s in range(r + 1):
            e = used[s]
            for end, v in (("low", z[s]), ("high", z[s + 1])):
                if end == "low" and s == 0:
                    continue  # at value 0 bidding 0 is optimal
                u_own = (v - bids[e]) * H[e]
                for ell in range(instance.num_bids):
                    if ell == e:
                        continue
                    diff = u_own - (v - bids[ell]) * H[ell]
                    neighbour = (end == "low" and ell == used[s - 1]) or (end == "high" and s < r and ell == used[s + 1])
                    if neighbour:
                        if end == "high":
                            cons.append(
                                Constraint("indifference", diff, True, f"bidder {i}: bids {e}~{ell} at boundary {s + 1}")
                            )
                        continue
                    cons.append(Constraint("best-response", diff, label=f"bidder {i}: bid {e} vs {ell} at {end} end"))
    return PolySystem(guess, nvars, tuple(lower), tuple(upper), tuple(cons), tau)


def system_violation(system: PolySystem, point: Sequence[float]) -> float:
    """Largest violation: equality residual, negative inequality part, or box excess."""
    worst = 0.0
    for k, x in enumerate(point):
        worst = max(worst, float(system.lower[k]) - x, x - float(system.upper[k]))
    for c in system.constraints:
        val = float(c.poly([float(x) for x in point]))
        worst = max(worst, abs(val) if c.equality else -val)
    return worst


# -- numeric solving -----------------------------------------------------------------


@dataclass(frozen=True)
class SystemSolution:
    point: tuple[float, ...] | None
    residual: float
    feasible: bool
    starts: int = 0


@dataclass(frozen=True)
class EnumConfig:
    starts: int = 12
    seed: int = 0
    tau: float = DEFAULT_TAU
    max_bidders: int = 4
    max_bids: int = 5
    max_guesses: int = 200_000
    exhaustive: bool = False


def solve_system_numeric(system: PolySystem, delta, config: EnumConfig | None = None) -> SystemSolution:
    """Multi-start bounded least squares on equality residuals and inequality hinges.

    Strict orderings use the margin ``tau``. Feasible means the final
    violation is at most ``delta``.
    """
    config = config or EnumConfig()
    delta = float(delta)
    if delta <= 0:
        raise DomainError("delta must be positive")
    if system.box_empty():
        return SystemSolution(None, math.inf, False, 0)
    if system.nvars == 0:
        res = system_violation(system, ())
        return SystemSolution((), res, res <= delta, 0)
    eqs = [c.poly for c in system.constraints if c.equality]
    ineqs = [c.poly for c in system.constraints if not c.equality]
    shifts = np.array([system.tau if c.kind == "order" else 0.0 for c in system.constraints if not c.equality])
    E = CompiledPolys(eqs, system.nvars)
    Iq = CompiledPolys(ineqs, system.nvars)
    lo = np.array([float(x) for x in system.lower])
    hi = np.array([float(x) for x in system.upper])
    if np.any(lo > hi):  # pragma: no cover - box_empty covers exact comparisons
        return SystemSolution(None, math.inf, False, 0)

    def resid(x):
        return np.concatenate([E(x), np.minimum(Iq(x) - shifts, 0.0)])

    rng = np.random.default_rng(config.seed)
    best_x, best_res = None, math.inf
    span = hi - lo
    for start in range(config.starts):
        x0 = lo + span * (0.5 if start == 0 else rng.random(len(lo)))
        if np.all(span == 0):
            x = x0
        else:
            x0 = np.clip(x0, lo, hi)
            free = span > 0
            sol = least_squares(
                lambda y: resid(_fill(y, x0, free)),
                x0[free],
                bounds=(lo[free], hi[free]),
                xtol=1e-15,
                ftol=1e-15,
                gtol=1e-15,
                max_nfev=2000,
            )
            x = _fill(sol.x, x0, free)
        r = float(np.max(np.abs(resid(x)), initial=0.0))
        if r < best_res:
            best_x, best_res = x, r
        if best_res <= min(delta, 1e-13):
            break
    return SystemSolution(tuple(float(v) for v in best_x), best_res, best_res <= delta, start + 1)


def _fill(y, base, free):
    x = base.copy()
    x[free] = y
    return x


def project_to_domain(instance: AuctionInstance, point: Sequence, guess: Guess) -> StrategyProfile:
    """Clamp boundaries into the domain and expand them to full jump vectors.

    ``z~_s = trunc_[max(b_{used[s]}, z~_{s-1}), 1](z_s)``; collapsed jumps share
    the boundary of the next used bid and jumps past the last used bid are 1.
    Floats are converted exactly, so the output satisfies every domain
    condition exactly.
    """
    values = [as_fraction(float(x)) if not isinstance(x, Fraction) else x for x in point]
    bids = instance.bids
    rows, pos = [], 0
    for used, pieces in zip(guess.used, guess.pieces):
        r = len(pieces)
        z = []
        prev = Fraction(0)
        for s in range(r):
            x = values[pos + s]
            floor = max(bids[used[s + 1]], prev)
            x = min(max(x, floor), Fraction(1))
            z.append(x)
            prev = x
        pos += r
        row = []
        for t in range(instance.m):
            s = _boundary_after(used, t)
            row.append(Fraction(1) if s is None else z[s])
        row.append(Fraction(1))
        rows.append(tuple(row))
    return StrategyProfile(tuple(rows))


# -- driver ----------------------------------------------------------------------------


@dataclass(frozen=True)
class GuessReport:
    guess: Guess
    residual: float
    certified: bool
    max_regret: object = None


@dataclass(frozen=True)
class EnumResult:
    profile: StrategyProfile | None
    certified: bool
    reports: tuple[GuessReport, ...] = field(default=(), repr=False)
    guesses_tried: int = 0

    @property
    def certified_guesses(self) -> list[Guess]:
        return [r.guess for r in self.reports if r.certified]


def solve_constant_size(instance: AuctionInstance, eps, config: EnumConfig | None = None) -> EnumResult:
    """First guess (fewest boundaries first) whose projected solution certifies.

    Solutions are verified exactly at ``eps``. With ``exhaustive=True`` every
    guess is tried and reported.
    """
    config = config or EnumConfig()
    eps_q = as_fraction(eps)
    if eps_q <= 0:
        raise DomainError("eps must be positive")
    if instance.n > config.max_bidders or instance.num_bids > config.max_bids:
        raise ResourceError(
            f"instance with {instance.n} bidders and {instance.num_bids} bids exceeds the caps "
            f"({config.max_bidders}, {config.max_bids})",
            count=instance.n,
        )
    delta = continuity_delta(instance, eps_q / 2)
    reports = []
    found = None
    tried = 0
    for guess in enumerate_guesses(instance, config.max_guesses):
        tried += 1
        system = build_system(instance, guess, config.tau)
        sol = solve_system_numeric(system, delta, config)
        certified, regret = False, None
        if sol.point is not None and sol.residual <= float(eps_q):
            profile = project_to_domain(instance, sol.point, guess)
            report = verify_epsilon_bne(instance, profile, eps_q)
            certified, regret = report.is_eq, report.max_regret
            if certified and found is None:
                found = profile
        log.info("guess %s: residual %.3e certified=%s", guess, sol.residual, certified)
        reports.append(GuessReport(guess, sol.residual, certified, regret))
        if found is not None and not config.exhaustive:
            break
    return EnumResult(found, found is not None, tuple(reports), tried)
