import random
from fractions import Fraction
from pathlib import Path

import mpmath
import pytest
from hypothesis import HealthCheck, settings

from fpabne.auction import AuctionInstance, StrategyProfile
from fpabne.distributions import PiecewiseCdf

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = Path(__file__).parent / "data"

# criterion number -> PASS/FAIL line, filled by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}
F = Fraction

mpmath.mp.dps = 70
# Independent high-precision value of the golden equilibrium jump.
GOLDEN_A = Fraction(mpmath.nstr((mpmath.sqrt(5) - 1) / 2, 60, min_fixed=-1, max_fixed=1))
GOLDEN_FLOAT = float(GOLDEN_A)


def golden_instance() -> AuctionInstance:
    return AuctionInstance.symmetric(3, [F(0), F(1, 2)], PiecewiseCdf.uniform())


def random_blocks_cdf(rng: random.Random, max_blocks: int = 3, denom: int = 12) -> PiecewiseCdf:
    """Random piecewise-constant density with rational blocks."""
    cuts = sorted(rng.sample(range(1, denom), rng.randint(0, min(2 * max_blocks - 1, denom - 2))))
    edges = [0] + cuts + [denom]
    spans = list(zip(edges, edges[1:]))
    chosen = [s for s in spans if rng.random() < 0.7] or [spans[0]]
    weights = [rng.randint(1, 5) for _ in chosen]
    total = sum(weights)
    return PiecewiseCdf.from_blocks(
        [((F(lo, denom), F(hi, denom)), F(w, total)) for (lo, hi), w in zip(chosen, weights)]
    )


def random_quadratic_cdf(rng: random.Random) -> PiecewiseCdf:
    """F(z) = c z + (1 - c) z^2, monotone for c in [0, 1]."""
    c = F(rng.randint(0, 8), 8)
    return PiecewiseCdf((F(0), F(1)), ((F(0), c, 1 - c),))


def random_bids(rng: random.Random, max_bids: int = 4, denom: int = 10) -> list[Fraction]:
    k = rng.randint(1, max_bids)
    return [F(0)] + [F(x, denom) for x in sorted(rng.sample(range(1, denom), k - 1))]


def random_instance(rng: random.Random, max_n: int = 4, max_bids: int = 4, quadratic: bool = True) -> AuctionInstance:
    n = rng.randint(2, max_n)
    bids = random_bids(rng, max_bids)

    def prior():
        if quadratic and rng.random() < 0.25:
            return random_quadratic_cdf(rng)
        return random_blocks_cdf(rng)

    priors = tuple(tuple(None if i == j else prior() for j in range(n)) for i in range(n))
    return AuctionInstance(tuple(bids), priors)


def random_profile(rng: random.Random, instance: AuctionInstance, denom: int = 97) -> StrategyProfile:
    """Exact random monotone non-overbidding profile."""
    bids = instance.bids
    rows = []
    for _ in range(instance.n):
        row, prev = [], F(0)
        for k in range(len(bids) - 1):
            lo = max(prev, bids[k + 1])
            x = lo + (1 - lo) * F(rng.randint(0, denom), denom) * (F(1, 2) if rng.random() < 0.5 else 1)
            row.append(x)
            prev = x
        row.append(F(1))
        rows.append(tuple(row))
    return StrategyProfile(tuple(rows))


@pytest.fixture
def golden():
    return golden_instance()


@pytest.fixture(scope="session")
def cycle_solution():
    """Certified 1e-6 equilibrium of the 30-bidder auction for the 3-cycle of G1- gates."""
    from fpabne.brouwer import SolverConfig, solve_fixed_point
    from fpabne.gcircuit import Gate, GateType, GeneralizedCircuit
    from fpabne.reduction import build_auction

    c = GeneralizedCircuit(tuple(Gate(GateType.COMPL, (i + 2) % 3) for i in range(3)))
    out = build_auction(c)
    return out, solve_fixed_point(out.auction, 1e-6, SolverConfig(restarts=4, seed=0))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
