from dataclasses import replace

import numpy as np
import pytest

from ratings_market import (
    Equilibrium,
    EquilibriumKind,
    InvalidRegime,
    MarketParams,
    MultipleEquilibria,
    QueuePair,
    QueueQuad,
    Stability,
    ViolatedBound,
    bi_curve,
    buyer_match_rate,
    buyer_payoff_slope,
    classify_stability,
    discriminatory_mass_interval,
    enumerate_discriminatory,
    find_stable_discriminatory,
    group_payoff,
    group_payoff_slope,
    payoff_asymmetry,
    payoff_increasing_interval,
    required_buyer_mass,
    solve_nondiscriminatory,
)


def _pinned_equilibrium(lam_g: float, params: MarketParams):
    """Build the non-discriminatory equilibrium whose G queue is ``lam_g``.

    Choosing the endowment as the absorbed mass at (lam_g, bi(lam_g)) makes
    that queue pair an equilibrium by construction.
    """
    lam_b = bi_curve(lam_g, params)
    mass = required_buyer_mass(QueuePair(lam_g, lam_b), params)
    pinned = replace(params, buyer_mass=mass)
    pair = QueuePair(lam_g, lam_b)
    eq = Equilibrium(
        kind=EquilibriumKind.NON_DISCRIMINATORY,
        queues=QueueQuad(pair, pair),
        buyer_payoff=0.0,
        buyer_split=(0.5 * mass, 0.5 * mass),
    )
    return eq, pinned


def test_group_payoff_blows_up_at_zero(branching_params):
    # U diverges like the buyer match rate (2q)**(k-1) as the group's buyer
    # mass vanishes; with k near 1 the climb is slow but unbounded.
    small = group_payoff(1e-8, branching_params)
    mid = group_payoff(1e-3, branching_params)
    large = group_payoff(0.05, branching_params)
    assert small > mid > large
    margin = 0.5 * (branching_params.u_high + branching_params.u_low) - branching_params.price
    assert small > 0.9 * buyer_match_rate(2e-8, branching_params.k) * margin
    assert small > 10


def test_group_payoff_alpha_to_zero_regression():
    # With no rating power the equilibrium splits buyers evenly at belief
    # 1/2, so U(q) is the buyer match rate at queue 2q times the net margin.
    params = MarketParams(
        delta=0.1, alpha=1e-12, u_high=2.0, u_low=1.0, price=1.0, k=0.6, buyer_mass=1.0
    )
    margin = 0.5 * (params.u_high + params.u_low) - params.price
    for q in (0.2, 0.7, 2.0):
        expected = buyer_match_rate(2 * q, params.k) * margin
        assert group_payoff(q, params) == pytest.approx(expected, rel=1e-6)


def test_group_payoff_finite_at_half_endowment(branching_params):
    value = group_payoff(0.5 * branching_params.buyer_mass, branching_params)
    assert np.isfinite(value) and value > 0


def test_group_payoff_guards(branching_params):
    with pytest.raises(ViolatedBound):
        group_payoff(0.0, branching_params)
    with pytest.raises(InvalidRegime):
        group_payoff(1.0, replace(branching_params, price=2.5))


def test_group_payoff_rejects_multiple_equilibria(crossing_params):
    from ratings_market.figures import pick_multi_crossing_mass

    params = replace(crossing_params, k=0.9121)
    mass = pick_multi_crossing_mass(params)
    with pytest.raises(MultipleEquilibria) as err:
        group_payoff(0.5 * mass, replace(params, buyer_mass=mass))
    assert err.value.count == 3


def test_slope_negative_on_steep_left_tail(branching_params):
    estimate = group_payoff_slope(1e-4, branching_params)
    assert estimate.value < -1.0
    assert estimate.forward < 0 and estimate.backward < 0
    # This deep in the blow-up the fixed relative step spans real curvature,
    # so the one-sided estimates legitimately disagree and get reported.
    assert estimate.kinked
    smooth = group_payoff_slope(0.5 * branching_params.buyer_mass, branching_params)
    # Away from the blow-up the disagreement is curvature-sized, not a kink.
    assert abs(smooth.forward - smooth.backward) < 0.01 * abs(smooth.value)


def test_slope_positive_inside_increasing_band(crossing_params):
    lo, hi = payoff_increasing_interval(crossing_params)
    eq, pinned = _pinned_equilibrium((lo * hi) ** 0.5, crossing_params)
    estimate = group_payoff_slope(0.5 * pinned.buyer_mass, pinned)
    assert estimate.value > 0


def test_slope_halved_step_consistency(branching_params):
    q = 0.5 * branching_params.buyer_mass
    step = 1e-5 * max(q, 1.0)
    coarse = (
        group_payoff(q + step, branching_params) - group_payoff(q - step, branching_params)
    ) / (2 * step)
    fine = (
        group_payoff(q + 0.5 * step, branching_params)
        - group_payoff(q - 0.5 * step, branching_params)
    ) / step
    assert abs(fine - coarse) < 1e-4 * abs(coarse)


def test_slope_sign_matches_payoff_slope(crossing_params):
    # The group-payoff derivative and the G-payoff slope at the equilibrium
    # queue carry the same sign, on both sides of the increasing band.
    lo, hi = payoff_increasing_interval(crossing_params)
    for lam_g in (0.5 * lo, (lo * hi) ** 0.5, 2.0 * hi):
        eq, pinned = _pinned_equilibrium(lam_g, crossing_params)
        du = group_payoff_slope(0.5 * pinned.buyer_mass, pinned).value
        slope = buyer_payoff_slope("G", lam_g, pinned)
        assert np.sign(du) == np.sign(slope)


def test_classify_nondiscriminatory_by_band_position(crossing_params):
    lo, hi = payoff_increasing_interval(crossing_params)
    eq, pinned = _pinned_equilibrium(0.5 * lo, crossing_params)
    report = classify_stability(eq, pinned)
    assert report.verdict is Stability.STABLE
    assert report.criterion_value <= 0
    assert report.u_prime_q1.value == report.u_prime_q2.value

    eq, pinned = _pinned_equilibrium((lo * hi) ** 0.5, crossing_params)
    report = classify_stability(eq, pinned)
    assert report.verdict is Stability.UNSTABLE
    assert report.criterion_value > 0
    assert report.equilibrium.stability is Stability.UNSTABLE


def test_classify_rejects_no_trade(branching_params):
    (eq,) = solve_nondiscriminatory(replace(branching_params, price=2.5))
    with pytest.raises(InvalidRegime):
        classify_stability(eq, replace(branching_params, price=2.5))


def test_asymmetry_zero_at_origin(branching_params):
    assert payoff_asymmetry(0.0, branching_params.buyer_mass, branching_params) == 0.0


def test_asymmetry_negative_near_half(branching_params):
    q = branching_params.buyer_mass
    assert payoff_asymmetry(0.499 * q, q, branching_params) < 0


def test_asymmetry_guards(branching_params):
    with pytest.raises(ViolatedBound):
        payoff_asymmetry(-0.1, 1.0, branching_params)
    with pytest.raises(ViolatedBound):
        payoff_asymmetry(0.5, 1.0, branching_params)


def test_asymmetry_roots_match_enumerated_equilibria(branching_params):
    # Every discriminatory equilibrium shows up as a root of the asymmetry
    # function at half the split gap, and vice versa for the stable search.
    q = branching_params.buyer_mass
    found = enumerate_discriminatory(branching_params)
    assert found
    for eq in found:
        x = 0.5 * abs(eq.buyer_split[0] - eq.buyer_split[1])
        assert abs(payoff_asymmetry(x, q, branching_params)) < 1e-6


def test_find_stable_none_when_monotone(monotone_params):
    assert find_stable_discriminatory(1.0, monotone_params) is None


def test_find_stable_matches_enumeration(branching_params):
    q = branching_params.buyer_mass
    stable = find_stable_discriminatory(q, branching_params)
    assert stable is not None
    assert stable.stability is Stability.STABLE
    report = classify_stability(stable, branching_params)
    assert report.criterion_value <= 0
    # The stable equilibrium coincides with one produced by the independent
    # branch-pair sweep.
    candidates = enumerate_discriminatory(branching_params)
    gaps = [
        max(
            abs(stable.queues.group1.lambda_g - eq.queues.group1.lambda_g),
            abs(stable.queues.group2.lambda_g - eq.queues.group2.lambda_g),
            abs(stable.queues.group1.lambda_b - eq.queues.group1.lambda_b),
        )
        for eq in candidates
    ]
    assert min(gaps) < 1e-6


def test_find_stable_existence_link(branching_params):
    lo, hi = discriminatory_mass_interval(branching_params)
    for q, expect in ((0.5 * (lo + hi), True), (0.5 * lo, False), (2.0 * hi, False)):
        params = replace(branching_params, buyer_mass=q)
        assert bool(enumerate_discriminatory(params)) == expect
        assert (find_stable_discriminatory(q, params) is not None) == expect


def test_unstable_discriminatory_exists_alongside_stable(branching_params):
    # At the demo endowment the middle asymmetry root is unstable while the
    # largest is stable; classification separates the two enumerated splits.
    verdicts = {
        classify_stability(eq, branching_params).verdict
        for eq in enumerate_discriminatory(branching_params)
    }
    assert verdicts == {Stability.STABLE, Stability.UNSTABLE}


def test_stability_invariant_to_group_relabel(branching_params):
    eq = enumerate_discriminatory(branching_params)[0]
    swapped = Equilibrium(
        kind=eq.kind,
        queues=QueueQuad(eq.queues.group2, eq.queues.group1),
        buyer_payoff=eq.buyer_payoff,
        buyer_split=(eq.buyer_split[1], eq.buyer_split[0]),
    )
    a = classify_stability(eq, branching_params)
    b = classify_stability(swapped, branching_params)
    assert a.verdict is b.verdict
    assert a.criterion_value == pytest.approx(b.criterion_value, rel=1e-12)
