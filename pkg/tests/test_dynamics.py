import numpy as np
import pytest

from conftest import draw_trade_params
from ratings_market import (
    MarketParams,
    QueuePair,
    SteadyState,
    ViolatedBound,
    beliefs,
    default_step,
    flow_residuals,
    integrate_flows,
    simulate_population,
    steady_state,
)
from ratings_market.dynamics import trajectory_rows


def _stable_step(queues: QueuePair, params: MarketParams) -> float:
    """Fast step for convergence runs: terminal accuracy is step-free here
    because the stationary state of the flow map matches the flow's own."""
    psi_max = max(queues.lambda_g, queues.lambda_b) ** params.k
    return 0.4 / (params.delta + params.alpha * psi_max)


def test_fixed_point_stays_put(humped_params):
    queues = QueuePair(1.2, 0.4)
    state = steady_state(queues, humped_params)
    traj = integrate_flows(state, queues, humped_params, horizon=50.0)
    assert traj.terminal_residual < 1e-10
    for snapshot in traj.states:
        assert snapshot.as_tuple() == pytest.approx(state.as_tuple(), abs=1e-12)


def test_inactive_market_only_mixes_types(humped_params):
    # With both queues empty nothing moves between ratings; type churn
    # equalizes the split inside each rating class.
    initial = SteadyState(0.55, 0.05, 0.1, 0.3, 1.0)
    queues = QueuePair(0.0, 0.0)
    traj = integrate_flows(initial, queues, humped_params, horizon=400.0)
    for snapshot in traj.states:
        assert snapshot.mass_g == pytest.approx(0.6, abs=1e-12)
        assert snapshot.mass_b == pytest.approx(0.4, abs=1e-12)
    terminal = traj.terminal
    assert terminal.p_hg == pytest.approx(0.3, abs=1e-9)
    assert terminal.p_lg == pytest.approx(0.3, abs=1e-9)
    assert terminal.p_hb == pytest.approx(0.2, abs=1e-9)


def test_random_starts_reach_closed_form():
    rng = np.random.default_rng(9)
    for _ in range(20):
        params = draw_trade_params(rng)
        # Keep the correction rates within a factor of the churn rate so a
        # 200/delta horizon always covers the slowest relaxation mode.
        params = MarketParams(
            delta=params.delta,
            alpha=rng.uniform(0.3, 1.0),
            u_high=params.u_high,
            u_low=params.u_low,
            price=params.price,
            k=rng.uniform(0.35, 0.95),
            buyer_mass=params.buyer_mass,
        )
        queues = QueuePair(*np.exp(rng.uniform(np.log(0.3), np.log(5.0), size=2)))
        initial = SteadyState(*rng.dirichlet(np.ones(4)), seller_mass=1.0)
        target = steady_state(queues, params)
        traj = integrate_flows(
            initial,
            queues,
            params,
            horizon=200.0 / params.delta,
            step=_stable_step(queues, params),
            record_stride=10**9,
        )
        gap = max(abs(a - b) for a, b in zip(traj.terminal.as_tuple(), target.as_tuple()))
        assert gap < 1e-6
        assert max(abs(r) for r in flow_residuals(target, queues, params)) < 1e-12


def test_mass_conserved_along_trajectory(humped_params):
    initial = SteadyState(0.9, 0.05, 0.03, 0.02, 1.0)
    traj = integrate_flows(initial, QueuePair(2.0, 0.3), humped_params, horizon=500.0)
    for snapshot in traj.states:
        assert abs(sum(snapshot.as_tuple()) - 1.0) < 1e-10
    assert all(b > a for a, b in zip(traj.times, traj.times[1:]))


def test_oversized_step_recovers_by_halving(humped_params):
    # An explosive step makes some mass negative; the integrator halves the
    # step until the update is admissible and still lands on the target.
    queues = QueuePair(30.0, 0.1)
    initial = SteadyState(0.01, 0.01, 0.01, 0.97, 1.0)
    traj = integrate_flows(initial, queues, humped_params, horizon=2000.0, step=40.0)
    target = steady_state(queues, humped_params)
    gap = max(abs(a - b) for a, b in zip(traj.terminal.as_tuple(), target.as_tuple()))
    assert gap < 1e-6


def test_integrate_validates_inputs(humped_params):
    initial = SteadyState(0.25, 0.25, 0.25, 0.25, 1.0)
    with pytest.raises(ViolatedBound):
        integrate_flows(initial, QueuePair(1.0, 1.0), humped_params, horizon=0.5, step=1.0)
    with pytest.raises(ViolatedBound):
        integrate_flows(initial, QueuePair(1.0, 1.0), humped_params, horizon=1.0, step=-1.0)


def test_default_step_respects_fast_corrections(humped_params):
    slow = default_step(QueuePair(0.0, 0.0), humped_params)
    assert slow == pytest.approx(0.01 / humped_params.delta)
    fast = default_step(QueuePair(100.0, 1.0), humped_params)
    assert fast < slow


def test_simulation_is_deterministic(humped_params):
    queues = QueuePair(1.0, 0.5)
    a = simulate_population(500, queues, humped_params, horizon=200.0, seed=11)
    b = simulate_population(500, queues, humped_params, horizon=200.0, seed=11)
    assert a.state.as_tuple() == b.state.as_tuple()
    assert a.std_errors == b.std_errors
    c = simulate_population(500, queues, humped_params, horizon=200.0, seed=12)
    assert a.state.as_tuple() != c.state.as_tuple()


def test_simulation_matches_closed_form(humped_params):
    queues = QueuePair(1.5, 0.7)
    sample = simulate_population(
        10_000, queues, humped_params, horizon=500.0 / humped_params.delta, seed=2
    )
    target = steady_state(queues, humped_params)
    for got, want, err in zip(
        sample.state.as_tuple(), target.as_tuple(), sample.std_errors
    ):
        assert abs(got - want) <= 3.0 * err


def test_simulation_sharp_ratings_limit(humped_params):
    # Heavily worked submarkets with certain corrections: ratings track
    # types closely, so the empirical beliefs separate toward 0 and 1.
    from dataclasses import replace

    params = replace(humped_params, alpha=1.0)
    queues = QueuePair(30.0, 30.0)
    sample = simulate_population(4000, queues, params, horizon=600.0, seed=5)
    state = sample.state
    mu_g_hat = state.p_hg / state.mass_g
    mu_b_hat = state.p_hb / state.mass_b
    assert mu_g_hat > 0.9
    assert mu_b_hat < 0.1
    reference = beliefs(queues, params)
    assert mu_g_hat == pytest.approx(reference.mu_g, abs=0.02)
    assert mu_b_hat == pytest.approx(reference.mu_b, abs=0.02)


def test_simulation_error_shrinks_with_population(monotone_params):
    queues = QueuePair(1.0, 1.0)
    target = steady_state(queues, monotone_params)

    def worst_error(n, seed):
        sample = simulate_population(
            n, queues, monotone_params, horizon=400.0 / monotone_params.delta, seed=seed
        )
        return max(abs(a - b) for a, b in zip(sample.state.as_tuple(), target.as_tuple()))

    errors = {n: worst_error(n, seed=21) for n in (10**3, 10**4, 10**5)}
    # Root-n scaling within generous slack: scaled errors stay in one decade.
    scaled = [errors[n] * np.sqrt(n) for n in (10**3, 10**4, 10**5)]
    assert errors[10**5] < errors[10**3]
    assert max(scaled) / min(scaled) < 10.0


def test_trajectory_rows_export(humped_params):
    initial = SteadyState(0.4, 0.2, 0.2, 0.2, 1.0)
    traj = integrate_flows(initial, QueuePair(1.0, 1.0), humped_params, horizon=10.0)
    rows = list(trajectory_rows(traj))
    assert len(rows) == len(traj.times)
    assert rows[0] == (0.0, 0.4, 0.2, 0.2, 0.2)
    assert all(len(row) == 5 for row in rows)
