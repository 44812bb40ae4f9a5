import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpabne.auction import (
    UNBOUNDED,
    AuctionInstance,
    StrategyProfile,
    best_response,
    brute_force_win_prob,
    crossing_point,
    profile_violations,
    tie_polynomial,
    tie_table,
    utility,
    verify_epsilon_bne,
    win_prob,
    win_probs,
)
from fpabne.distributions import PiecewiseCdf
from fpabne.errors import DomainError, PreconditionError, ResourceError, StructureError

from conftest import GOLDEN_A, golden_instance, random_instance, random_profile
from strategies import instance_and_profile

F = Fraction
HIGH = PiecewiseCdf.from_blocks([((F(9, 10), F(1)), F(1))])  # values always in [9/10, 1]


def three_bid_instance():
    return AuctionInstance.symmetric(3, [F(0), F(1, 2), F(3, 4)])


# -- tie table ---------------------------------------------------------------------


def test_tie_table_base_case():  # [PAPER] T(b,0,0) = 1
    assert tie_polynomial([], []) == [1]


def test_tie_table_no_more_ties_than_opponents():  # [PAPER] T(b,l,k) = 0 for k > l
    row = tie_polynomial([F(1, 3)], [F(1, 3)])
    assert len(row) == 2  # k = 0, 1 only
    assert tie_polynomial([F(1, 2)], [F(0)]) == [F(1, 2), F(0)]


def test_tie_table_two_opponents():
    # [DERIVED] each opponent bids below w.p. 1/2 (alpha(b0) = 1/2) and ties w.p. 1/4.
    inst = three_bid_instance()
    prof = StrategyProfile.constant(3, [F(1, 2), F(3, 4), F(1)])
    row = tie_table(inst, 0, F(1, 2), prof)
    # subset sums: {} -> 1/2*1/2, {1},{2} -> 2 * 1/4*1/2, {1,2} -> 1/4*1/4
    assert row == [F(1, 4), F(1, 4), F(1, 16)]
    assert win_prob(inst, 0, F(1, 2), prof) == F(19, 48)
    assert brute_force_win_prob(inst, 0, F(1, 2), prof) == F(19, 48)


def test_win_prob_two_bidder_cases():
    inst = AuctionInstance.symmetric(2, [F(0), F(1, 2)])
    prof = StrategyProfile.constant(2, [F(1), F(1)])  # opponent always bids 0
    assert win_prob(inst, 0, F(0), prof) == F(1, 2)
    assert win_prob(inst, 0, F(1, 2), prof) == 1


def test_win_prob_zero_when_outbid():
    inst = AuctionInstance((F(0), F(1, 2)), ((None, HIGH), (HIGH, None)))
    prof = StrategyProfile.constant(2, [F(1, 2), F(1)])  # everyone above 1/2 bids 1/2
    assert win_prob(inst, 0, F(0), prof) == 0
    assert brute_force_win_prob(inst, 0, F(0), prof) == 0
    assert win_prob(inst, 0, F(1, 2), prof) == F(1, 2)


def test_bid_outside_space():
    inst = golden_instance()
    with pytest.raises(DomainError):
        win_prob(inst, 0, F(1, 3), StrategyProfile.constant(3, [F(1, 2), F(1)]))


def test_brute_force_refuses_large_n():
    inst = AuctionInstance.symmetric(30, [F(0)])
    with pytest.raises(ResourceError):
        brute_force_win_prob(inst, 0, F(0), StrategyProfile.constant(30, [F(1)]))


def test_single_bidder_rejected():
    with pytest.raises(StructureError):
        AuctionInstance.symmetric(1, [F(0)])


# -- utility ------------------------------------------------------------------------


def test_utility_zero_margin():
    inst = golden_instance()
    prof = StrategyProfile.constant(3, [F(2, 3), F(1)])
    assert utility(inst, 0, F(1, 2), prof, F(1, 2)) == 0


def test_utility_arithmetic():
    inst = AuctionInstance((F(0), F(1, 2)), ((None, HIGH), (HIGH, None)))
    prof = StrategyProfile.constant(2, [F(1, 2), F(1)])
    assert win_prob(inst, 0, F(1, 2), prof) == F(1, 2)
    assert utility(inst, 0, F(1, 2), prof, F(4, 5)) == F(3, 20)


def test_golden_indifference():
    # [DERIVED] at the 60-digit jump both bids pay the same to the marginal type.
    inst = golden_instance()
    prof = StrategyProfile.constant(3, [GOLDEN_A, F(1)])
    u0 = utility(inst, 0, F(0), prof, GOLDEN_A)
    u1 = utility(inst, 0, F(1, 2), prof, GOLDEN_A)
    assert abs(u0 - u1) <= F(1, 10**12)


# -- best response --------------------------------------------------------------------


def test_best_response_against_zero_bidder():
    # [DERIVED] v/2 = (v - 1/2) * 1 only at v = 1: always bid 0.
    inst = AuctionInstance.symmetric(2, [F(0), F(1, 2)])
    prof = StrategyProfile.constant(2, [F(1), F(1)])
    assert best_response(inst, 0, prof) == (F(1), F(1))


def test_best_response_golden_fixed_point():
    # [PAPER] 2v + v a2 + v a3 = 1 + a2 a3 + a2/2 + a3/2 has root v = a when a2 = a3 = a.
    inst = golden_instance()
    prof = StrategyProfile.constant(3, [GOLDEN_A, F(1)])
    jump = best_response(inst, 0, prof)[0]
    a = GOLDEN_A
    assert jump == (1 + a * a + a) / (2 + 2 * a)
    assert abs(jump - GOLDEN_A) < F(1, 10**55)


def test_best_response_single_bid():
    inst = AuctionInstance.symmetric(3, [F(0)])
    assert best_response(inst, 1, StrategyProfile.constant(3, [F(1)])) == (F(1),)


def test_crossing_point_unbounded():
    assert crossing_point(F(0), F(1, 2), F(1, 2), F(1, 2)) is UNBOUNDED
    assert crossing_point(F(0), F(1, 2), F(1, 2), F(1)) == 1


# -- verifier -----------------------------------------------------------------------------


def test_verify_single_bid_is_exact_equilibrium():
    inst = AuctionInstance.symmetric(3, [F(0)])
    rep = verify_epsilon_bne(inst, StrategyProfile.constant(3, [F(1)]), 0)
    assert rep.is_eq and rep.max_regret == 0


def test_verify_golden():
    rep = verify_epsilon_bne(golden_instance(), StrategyProfile.constant(3, [GOLDEN_A, F(1)]), F(1, 10**12))
    assert rep.is_eq
    assert rep.max_regret <= F(1, 10**12)


def test_verify_rejects_shifted_golden():
    inst = golden_instance()
    prof = StrategyProfile.constant(3, [GOLDEN_A + F(1, 20), F(1)])
    rep = verify_epsilon_bne(inst, prof, F(1, 10**4))
    assert not rep.is_eq
    w = rep.witnesses[0]
    # the witness is a real violation: deviating gains more than eps
    gain = utility(inst, w.bidder, w.deviation, prof, w.value) - utility(inst, w.bidder, w.bid, prof, w.value)
    assert gain == w.regret > F(1, 10**4)
    # [DERIVED] grid oracle agrees
    assert grid_regret(inst, prof, 2000) > 1e-4


def test_verify_invalid_profile():
    inst = golden_instance()
    with pytest.raises(PreconditionError):
        verify_epsilon_bne(inst, StrategyProfile.constant(3, [F(1, 4), F(1)]), 0)  # overbids
    with pytest.raises(PreconditionError):
        verify_epsilon_bne(inst, StrategyProfile.constant(3, [F(3, 4), F(9, 10)]), 0)  # top jump != 1
    bad = StrategyProfile(((F(3, 4), F(1)), (F(3, 4), F(1)), (F(3, 4),)))
    assert profile_violations(inst, bad)


def grid_regret(inst, prof, G: int) -> float:
    """Largest deviation gain over the value grid {0, 1/G, ..., 1} (float)."""
    bids = [float(b) for b in inst.bids]
    worst = 0.0
    for i in range(inst.n):
        H = [float(h) for h in win_probs(inst, i, prof, exact=True)]
        row = [float(a) for a in prof.jumps[i]]
        k = 0
        for t in range(G + 1):
            v = t / G
            while k < len(row) - 1 and v > row[k]:
                k += 1
            own = (v - bids[k]) * H[k]
            best = max((v - b) * h for b, h in zip(bids, H))
            worst = max(worst, best - own)
    return worst


# -- properties ----------------------------------------------------------------------------


@given(instance_and_profile(max_n=5, max_bids=4), st.data())
def test_dp_equals_brute_force(ip, data):
    inst, prof = ip
    i = data.draw(st.integers(0, inst.n - 1))
    for b in inst.bids:
        assert win_prob(inst, i, b, prof) == brute_force_win_prob(inst, i, b, prof)


@given(instance_and_profile())
def test_win_prob_monotone_in_bid(ip):
    inst, prof = ip
    for i in range(inst.n):
        H = win_probs(inst, i, prof, exact=True)
        assert all(a <= b for a, b in zip(H, H[1:]))
        assert all(0 <= h <= 1 for h in H)


@given(instance_and_profile(), st.fractions(0, 1, max_denominator=50), st.fractions(0, 1, max_denominator=50))
def test_utility_affine_in_value(ip, v, w):
    inst, prof = ip
    b = inst.bids[-1]
    slope = win_prob(inst, 0, b, prof)
    assert utility(inst, 0, b, prof, v) - utility(inst, 0, b, prof, w) == slope * (v - w)


@settings(max_examples=60)
@given(instance_and_profile(), st.data())
def test_best_response_has_zero_regret(ip, data):
    inst, prof = ip
    i = data.draw(st.integers(0, inst.n - 1))
    new = prof.replace(i, best_response(inst, i, prof))
    assert not profile_violations(inst, new)
    rep = verify_epsilon_bne(inst, new, 0, bidders=[i])
    assert rep.is_eq and rep.max_regret == 0


def test_float_and_exact_verifier_agree():
    rng = random.Random(7)
    for _ in range(30):
        inst = random_instance(rng)
        prof = random_profile(rng, inst)
        exact = verify_epsilon_bne(inst, prof, 0)
        flt = verify_epsilon_bne(inst, prof, 0, exact=False)
        assert abs(float(exact.max_regret) - flt.max_regret) < 1e-12
