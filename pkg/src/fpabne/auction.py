"""First-price auction semantics: win probabilities, utilities, best responses
and the epsilon-equilibrium verifier.

Strategies are jump-point vectors: ``jumps[i][k]`` is the largest value at
which bidder ``i`` bids at most ``bids[k]``, so bidder ``i`` bids ``bids[k]``
on ``(jumps[i][k-1], jumps[i][k]]`` (with ``jumps[i][-1] := 0``).

Two arithmetic paths exist throughout. Profiles whose jumps are all rationals
are evaluated exactly with :class:`~fractions.Fraction`; anything containing a
float runs in float64, with :class:`FloatEngine` providing vectorized
evaluation for the iterative solvers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Sequence

import numpy as np

from .distributions import PiecewiseCdf, cdf_eval, validate_cdf
from .errors import DomainError, PreconditionError, ResourceError, StructureError, ValidationError
from .rational import as_fraction

__all__ = [
    "AuctionInstance",
    "StrategyProfile",
    "Unbounded",
    "UNBOUNDED",
    "Witness",
    "VerificationReport",
    "FloatEngine",
    "profile_violations",
    "tie_table",
    "tie_polynomial",
    "win_prob",
    "win_probs",
    "brute_force_win_prob",
    "utility",
    "crossing_point",
    "best_response",
    "verify_epsilon_bne",
]

BRUTE_FORCE_MAX_BIDDERS = 12


@dataclass(frozen=True)
class AuctionInstance:
    """Bidders ``0..n-1``, a bid grid containing 0, and subjective priors.

    ``priors[i][j]`` is bidder ``i``'s belief about bidder ``j``'s value; the
    diagonal is ignored and may be ``None``.
    """

    bids: tuple[Fraction, ...]
    priors: tuple[tuple[PiecewiseCdf | None, ...], ...]

    def __post_init__(self) -> None:
        bids = tuple(as_fraction(b) for b in self.bids)
        priors = tuple(tuple(row) for row in self.priors)
        object.__setattr__(self, "bids", bids)
        object.__setattr__(self, "priors", priors)
        n = len(priors)
        if n < 2:
            raise StructureError("an auction needs at least two bidders")
        if any(len(row) != n for row in priors):
            raise StructureError("the prior matrix must be n x n")
        if not bids or bids[0] != 0:
            raise StructureError("the bid space must contain 0 as its smallest bid")
        if any(a >= b for a, b in zip(bids, bids[1:])):
            raise StructureError("bids must be strictly increasing")
        if bids[-1] > 1:
            raise StructureError("bids must lie in [0, 1]")
        problems = []
        for F in self.distinct_priors():
            report = validate_cdf(F)
            if not report.ok:
                where = [(i, j) for i in range(n) for j in range(n) if i != j and priors[i][j] == F]
                problems.extend(f"prior {where[0]}: {v.message}" for v in report.violations)
        for i in range(n):
            for j in range(n):
                if i != j and not isinstance(priors[i][j], PiecewiseCdf):
                    problems.append(f"prior ({i}, {j}) is missing")
        if problems:
            raise ValidationError("invalid auction instance: " + "; ".join(problems), problems)

    @classmethod
    def symmetric(cls, n: int, bids: Sequence, prior: PiecewiseCdf | None = None) -> "AuctionInstance":
        """All bidders share one prior about everybody (uniform by default)."""
        F = prior or PiecewiseCdf.uniform()
        return cls(tuple(bids), tuple(tuple(None if i == j else F for j in range(n)) for i in range(n)))

    @property
    def n(self) -> int:
        return len(self.priors)

    @property
    def num_bids(self) -> int:
        return len(self.bids)

    @property
    def m(self) -> int:
        """Number of free jump points per bidder."""
        return len(self.bids) - 1

    def prior(self, i: int, j: int) -> PiecewiseCdf:
        return self.priors[i][j]

    def distinct_priors(self) -> list[PiecewiseCdf]:
        seen: dict[PiecewiseCdf, None] = {}
        for i, row in enumerate(self.priors):
            for j, F in enumerate(row):
                if i != j and F is not None:
                    seen.setdefault(F, None)
        return list(seen)

    def bid_index(self, b) -> int:
        b = as_fraction(b)
        try:
            return self.bids.index(b)
        except ValueError:
            raise DomainError(f"bid {b} is not in the bid space") from None

    @property
    def float_bids(self) -> np.ndarray:
        return np.array([float(b) for b in self.bids])


@dataclass(frozen=True)
class StrategyProfile:
    """Jump points ``jumps[i][k] = alpha_i(bids[k])`` for every bidder."""

    jumps: tuple[tuple, ...]

    def __post_init__(self) -> None:
        rows = tuple(tuple(_as_number(x) for x in row) for row in self.jumps)
        object.__setattr__(self, "jumps", rows)

    @classmethod
    def from_array(cls, arr) -> "StrategyProfile":
        arr = np.asarray(arr, dtype=float)
        return cls(tuple(tuple(float(x) for x in row) for row in arr))

    @classmethod
    def constant(cls, n: int, row: Sequence) -> "StrategyProfile":
        return cls(tuple(tuple(row) for _ in range(n)))

    @property
    def n(self) -> int:
        return len(self.jumps)

    @property
    def is_exact(self) -> bool:
        return all(isinstance(x, Rational) for row in self.jumps for x in row)

    def alpha(self, i: int, k: int):
        return self.jumps[i][k]

    def lower(self, i: int, k: int):
        """``alpha_i(b_k^-)``: the previous jump, or 0 for the lowest bid."""
        return self.jumps[i][k - 1] if k > 0 else 0

    def to_array(self) -> np.ndarray:
        return np.array([[float(x) for x in row] for row in self.jumps])

    def replace(self, i: int, row: Sequence) -> "StrategyProfile":
        rows = list(self.jumps)
        rows[i] = tuple(row)
        return StrategyProfile(tuple(rows))


def _as_number(x):
    if isinstance(x, Rational):
        return Fraction(x)
    if isinstance(x, (float, np.floating)):
        return float(x)
    if isinstance(x, str):
        return as_fraction(x)
    raise StructureError(f"jump point {x!r} is not a number")


def profile_violations(instance: AuctionInstance, profile: StrategyProfile, skip: Iterable[int] = ()) -> list[str]:
    """Every broken strategy invariant (shape, range, monotonicity, no-overbidding)."""
    skip = set(skip)
    if profile.n != instance.n:
        return [f"profile has {profile.n} bidders, instance has {instance.n}"]
    out = []
    nb = instance.num_bids
    for i, row in enumerate(profile.jumps):
        if i in skip:
            continue
        if len(row) != nb:
            out.append(f"bidder {i}: {len(row)} jump points for {nb} bids")
            continue
        exact = all(isinstance(x, Rational) for x in row)
        bids = instance.bids if exact else [float(b) for b in instance.bids]
        if row[-1] != 1:
            out.append(f"bidder {i}: jump at the highest bid is {row[-1]}, expected 1")
        for k, x in enumerate(row):
            if not 0 <= x <= 1:
                out.append(f"bidder {i}: jump {k} = {x} outside [0, 1]")
            if k > 0 and row[k - 1] > x:
                out.append(f"bidder {i}: jumps {k - 1} and {k} decrease")
            if k + 1 < nb and x < bids[k + 1]:
                out.append(f"bidder {i}: overbidding, jump {k} = {x} below bid {bids[k + 1]}")
    return out


def _require_valid(instance: AuctionInstance, profile: StrategyProfile, skip: Iterable[int] = ()) -> None:
    problems = profile_violations(instance, profile, skip)
    if problems:
        raise PreconditionError("invalid strategy profile: " + "; ".join(problems), problems)


# -- win probabilities -------------------------------------------------------


def tie_polynomial(G: Sequence, g: Sequence, one=1) -> list:
    """Tie-table DP over opponents.

    ``G[t]`` is the probability opponent ``t`` bids strictly below ``b`` and
    ``g[t]`` the probability it bids exactly ``b``. Returns ``T[k]``, the
    probability that exactly ``k`` opponents tie and all others are below.
    Works over any commutative ring whose elements support ``+`` and ``*``.
    """
    table = [one]
    for below, tie in zip(G, g):
        nxt = [table[0] * below]
        for k in range(1, len(table)):
            nxt.append(table[k - 1] * tie + table[k] * below)
        nxt.append(table[-1] * tie)
        table = nxt
    return table


def _win_from_table(table: Sequence):
    total = table[0]
    for k in range(1, len(table)):
        total = total + table[k] * Fraction(1, k + 1)
    return total


def _bid_probabilities(instance, i, k, profile, exact):
    """Per-opponent ``(G, g)`` lists for bidder ``i`` at bid index ``k``."""
    G, g = [], []
    for j in range(instance.n):
        if j == i:
            continue
        F = instance.priors[i][j]
        hi = cdf_eval(F, profile.jumps[j][k], exact=exact)
        # Nobody bids below the lowest bid, whatever the prior puts at 0.
        lo = cdf_eval(F, profile.jumps[j][k - 1], exact=exact) if k > 0 else (Fraction(0) if exact else 0.0)
        G.append(lo)
        g.append(hi - lo)
    return G, g


def _resolve_exact(profile: StrategyProfile, exact: bool | None) -> bool:
    return profile.is_exact if exact is None else exact


def tie_table(instance: AuctionInstance, i: int, b, profile: StrategyProfile, exact: bool | None = None) -> list:
    """Row ``T(b, n-1, k)``, ``k = 0..n-1``, of the tie-table DP for bidder ``i``."""
    k = instance.bid_index(b)
    exact = _resolve_exact(profile, exact)
    _require_valid(instance, profile, skip=[i])
    G, g = _bid_probabilities(instance, i, k, profile, exact)
    return tie_polynomial(G, g, Fraction(1) if exact else 1.0)


def win_prob(instance: AuctionInstance, i: int, b, profile: StrategyProfile, exact: bool | None = None):
    """Probability, as perceived by bidder ``i``, of winning with bid ``b``."""
    return _win_from_table(tie_table(instance, i, b, profile, exact))


def win_probs(instance: AuctionInstance, i: int, profile: StrategyProfile, exact: bool | None = None) -> list:
    """Win probabilities of bidder ``i`` at every bid (no validity check)."""
    exact = _resolve_exact(profile, exact)
    one = Fraction(1) if exact else 1.0
    return [
        _win_from_table(tie_polynomial(*_bid_probabilities(instance, i, k, profile, exact), one))
        for k in range(instance.num_bids)
    ]


def brute_force_win_prob(instance: AuctionInstance, i: int, b, profile: StrategyProfile, exact: bool | None = None):
    """Win probability by explicit summation over tying opponent subsets."""
    if instance.n > BRUTE_FORCE_MAX_BIDDERS:
        raise ResourceError(
            f"brute force needs 2^{instance.n - 1} subsets; limit is {BRUTE_FORCE_MAX_BIDDERS} bidders",
            count=2 ** (instance.n - 1),
        )
    k = instance.bid_index(b)
    exact = _resolve_exact(profile, exact)
    _require_valid(instance, profile, skip=[i])
    G, g = _bid_probabilities(instance, i, k, profile, exact)
    total = Fraction(0) if exact else 0.0
    opponents = range(len(G))
    for size in range(len(G) + 1):
        for ties in itertools.combinations(opponents, size):
            tie_set = set(ties)
            term = Fraction(1) if exact else 1.0
            for t in opponents:
                term = term * (g[t] if t in tie_set else G[t])
            total = total + term / (size + 1)
    return total


def utility(instance: AuctionInstance, i: int, b, profile: StrategyProfile, v, exact: bool | None = None):
    """Interim utility ``(v - b) * H_i(b)`` of bidder ``i`` with value ``v``."""
    exact = _resolve_exact(profile, exact) and isinstance(v, Rational)
    bid = as_fraction(b) if exact else float(as_fraction(b))
    return (v - bid) * win_prob(instance, i, b, profile, exact)


# -- best responses ------------------------------------------------------------


class Unbounded:
    """Marker for a crossing point at +infinity (equal win probabilities)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNBOUNDED"


UNBOUNDED = Unbounded()


def crossing_point(b_low, h_low, b_high, h_high):
    """Value at which bidding ``b_high`` starts to beat ``b_low``.

    Returns :data:`UNBOUNDED` when the higher bid never wins more often.
    """
    if h_high <= h_low:
        return UNBOUNDED
    return (b_high * h_high - b_low * h_low) / (h_high - h_low)


def envelope_jumps(bids: Sequence, H: Sequence) -> list:
    """Jump points of the upper envelope of the lines ``v -> (v - b_k) H_k``.

    Ties go to the lower bid. Implements
    ``alpha(b_k) = max_{k' <= k} min_{k'' > k'} crossing(k', k'')`` clipped to 1.
    """
    nb = len(bids)
    one = type(H[0])(1) if nb else 1
    out = []
    best = None
    for k in range(nb):
        inner = UNBOUNDED
        for k2 in range(k + 1, nb):
            x = crossing_point(bids[k], H[k], bids[k2], H[k2])
            if x is not UNBOUNDED and (inner is UNBOUNDED or x < inner):
                inner = x
        cand = one if inner is UNBOUNDED or inner > one else inner
        best = cand if best is None or cand > best else best
        out.append(best)
    if out:
        out[-1] = one
    return out


def best_response(instance: AuctionInstance, i: int, profile: StrategyProfile, exact: bool | None = None) -> tuple:
    """Jump vector of a best response of bidder ``i`` to the others' strategies."""
    _require_valid(instance, profile, skip=[i])
    exact = _resolve_exact(profile, exact)
    H = win_probs(instance, i, profile, exact)
    bids = list(instance.bids) if exact else [float(b) for b in instance.bids]
    return tuple(envelope_jumps(bids, H))


# -- verification --------------------------------------------------------------


@dataclass(frozen=True)
class Witness:
    bidder: int
    bid: object
    deviation: object
    value: object
    regret: object


@dataclass(frozen=True)
class VerificationReport:
    is_eq: bool
    max_regret: object
    witnesses: tuple[Witness, ...]
    eps: object

    def __bool__(self) -> bool:
        return self.is_eq


def verify_epsilon_bne(
    instance: AuctionInstance,
    profile: StrategyProfile,
    eps,
    bidders: Iterable[int] | None = None,
    exact: bool | None = None,
) -> VerificationReport:
    """Check the interval-endpoint deviation inequalities for every bidder.

    For each bid ``b`` used on a non-empty interval ``(lo, hi]`` no lower bid
    may pay more at ``lo`` and no higher bid may pay more at ``hi``; utilities
    are affine in the value so these endpoints are the worst cases. With
    ``bidders`` given, only their incentives are examined.
    """
    _require_valid(instance, profile)
    exact = _resolve_exact(profile, exact)
    eps_v = as_fraction(eps) if exact else float(eps)
    if eps_v < 0:
        raise DomainError("eps must be non-negative")
    who = range(instance.n) if bidders is None else list(bidders)
    if exact:
        bids = list(instance.bids)
        H_all = {i: win_probs(instance, i, profile, True) for i in who}
        zero = Fraction(0)
    else:
        bids = [float(b) for b in instance.bids]
        H_mat = FloatEngine.for_instance(instance).win_probs(profile.to_array())
        H_all = {i: list(H_mat[i]) for i in who}
        zero = 0.0
    worst = zero
    witnesses = []
    nb = instance.num_bids
    for i in who:
        H = H_all[i]
        for k in range(nb):
            lo, hi = profile.lower(i, k), profile.jumps[i][k]
            if not lo < hi:
                continue
            checks = [(lo, k2) for k2 in range(k)] + [(hi, k2) for k2 in range(k + 1, nb)]
            for v, k2 in checks:
                regret = (v - bids[k2]) * H[k2] - (v - bids[k]) * H[k]
                if regret > worst:
                    worst = regret
                if regret > eps_v:
                    witnesses.append(Witness(i, instance.bids[k], instance.bids[k2], v, regret))
    return VerificationReport(worst <= eps_v, worst, tuple(witnesses), eps_v)


# -- vectorized float path -----------------------------------------------------


class FloatEngine:
    """Vectorized float64 evaluation of all win probabilities of a profile.

    Prior pairs sharing one CDF are evaluated together, which keeps the
    per-call cost low on the large structured instances built by the
    circuit reduction.
    """

    _cache: dict = {}

    def __init__(self, instance: AuctionInstance):
        self.instance = instance
        self.n = instance.n
        self.bids = instance.float_bids
        groups: dict[PiecewiseCdf, list[tuple[int, int]]] = {}
        for i in range(self.n):
            for j in range(self.n):
                if i != j:
                    groups.setdefault(instance.priors[i][j], []).append((i, j))
        self.groups = [
            (F, np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs]))
            for F, pairs in groups.items()
        ]
        self.diag = np.arange(self.n)
        self.harmonic = 1.0 / np.arange(1, self.n + 1)

    @classmethod
    def for_instance(cls, instance: AuctionInstance) -> "FloatEngine":
        key = id(instance)
        hit = cls._cache.get(key)
        if hit is None or hit.instance is not instance:
            if len(cls._cache) > 64:
                cls._cache.clear()
            hit = cls(instance)
            cls._cache[key] = hit
        return hit

    def cdf_values(self, A: np.ndarray) -> np.ndarray:
        """``Fa[i, j, k] = F_ij(A[j, k])``; diagonal entries are 1."""
        nb = A.shape[1]
        Fa = np.ones((self.n, self.n, nb))
        for F, I, J in self.groups:
            Fa[I, J, :] = F.eval_many(A[J, :])
        return Fa

    def win_probs(self, A: np.ndarray) -> np.ndarray:
        """``H[i, k]``: win probability of bidder ``i`` at bid ``k``."""
        A = np.asarray(A, dtype=float)
        n, nb = self.n, A.shape[1]
        Fa = self.cdf_values(A)
        below = np.zeros_like(Fa)
        below[:, :, 1:] = Fa[:, :, :-1]
        tie = Fa - below
        below[self.diag, self.diag, :] = 1.0
        tie[self.diag, self.diag, :] = 0.0
        T = np.zeros((n, nb, n))
        T[:, :, 0] = 1.0
        for j in range(n):
            Gj = below[:, j, :, None]
            gj = tie[:, j, :, None]
            shifted = np.zeros_like(T)
            shifted[:, :, 1:] = T[:, :, :-1]
            T = T * Gj + shifted * gj
        return T @ self.harmonic
