"""Hypothesis strategies shared by the property tests."""

from fractions import Fraction

from hypothesis import strategies as st

from fpabne.auction import AuctionInstance, StrategyProfile
from fpabne.distributions import PiecewiseCdf

F = Fraction


@st.composite
def block_cdfs(draw, denom: int = 16):
    cuts = draw(st.sets(st.integers(1, denom - 1), max_size=5))
    edges = [0] + sorted(cuts) + [denom]
    spans = list(zip(edges, edges[1:]))
    keep = draw(st.lists(st.booleans(), min_size=len(spans), max_size=len(spans)))
    chosen = [s for s, k in zip(spans, keep) if k] or [spans[-1]]
    weights = draw(st.lists(st.integers(1, 9), min_size=len(chosen), max_size=len(chosen)))
    total = sum(weights)
    return PiecewiseCdf.from_blocks(
        [((F(lo, denom), F(hi, denom)), F(w, total)) for (lo, hi), w in zip(chosen, weights)]
    )


@st.composite
def poly_cdfs(draw):
    """Blocks or a single monotone quadratic/cubic piece."""
    if draw(st.booleans()):
        return draw(block_cdfs())
    # Convex combination of z, z^2, z^3 is a valid CDF on [0, 1].
    w = draw(st.lists(st.integers(0, 6), min_size=3, max_size=3).filter(lambda v: sum(v) > 0))
    total = sum(w)
    return PiecewiseCdf((F(0), F(1)), ((F(0), F(w[0], total), F(w[1], total), F(w[2], total)),))


unit_fractions = st.fractions(min_value=0, max_value=1, max_denominator=1000)
unit_floats = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


@st.composite
def instances(draw, max_n: int = 4, max_bids: int = 4):
    n = draw(st.integers(2, max_n))
    k = draw(st.integers(1, max_bids))
    bid_nums = sorted(draw(st.sets(st.integers(1, 9), min_size=k - 1, max_size=k - 1)))
    bids = (F(0),) + tuple(F(b, 10) for b in bid_nums)
    priors = tuple(tuple(None if i == j else draw(poly_cdfs()) for j in range(n)) for i in range(n))
    return AuctionInstance(bids, priors)


@st.composite
def profiles(draw, instance: AuctionInstance, denom: int = 64):
    rows = []
    for _ in range(instance.n):
        row, prev = [], F(0)
        for k in range(instance.num_bids - 1):
            lo = max(prev, instance.bids[k + 1])
            x = lo + (1 - lo) * F(draw(st.integers(0, denom)), denom)
            row.append(x)
            prev = x
        row.append(F(1))
        rows.append(tuple(row))
    return StrategyProfile(tuple(rows))


@st.composite
def instance_and_profile(draw, max_n: int = 4, max_bids: int = 4):
    inst = draw(instances(max_n, max_bids))
    return inst, draw(profiles(inst))
