"""Independent checks of the closed-form steady state.

Two non-closed-form routes to the same stationary distribution: a classical
4th-order fixed-step integration of the seller flow balance, and an exact
event-driven simulation of a finite seller population. Both hold the queue
ratios fixed; they validate the seller-side flow algebra, not equilibrium
selection, which the solvers check separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    FlowTrajectory,
    MarketParams,
    ModelError,
    QueuePair,
    StepTooLarge,
    SteadyState,
    ViolatedBound,
)
from .mechanics import flow_residuals

MAX_STEP_HALVINGS = 20
DEFAULT_SNAPSHOTS = 2048
BATCHES = 16


def default_step(queues: QueuePair, params: MarketParams) -> float:
    """Conservative fixed step: well under every transition timescale."""
    psi_max = max(queues.lambda_g, queues.lambda_b) ** params.k
    step = 0.01 / params.delta
    if psi_max > 0:
        step = min(step, 0.01 / (params.alpha * psi_max))
    return step


def integrate_flows(
    initial: SteadyState,
    queues: QueuePair,
    params: MarketParams,
    horizon: float,
    step: float | None = None,
    record_stride: int | None = None,
) -> FlowTrajectory:
    """Forward-integrate the seller flow balance from ``initial``.

    Classical explicit 4-stage integration at a fixed step (the system is
    linear in the masses, so stiff machinery buys nothing). If a step ever
    produces a negative mass the step is halved and retried, up to
    MAX_STEP_HALVINGS times. Total mass is conserved to 1e-10 throughout;
    ``record_stride`` thins the stored snapshots (the terminal state is
    always recorded).
    """
    if step is None:
        step = default_step(queues, params)
    if step <= 0:
        raise ViolatedBound("step", f"must be > 0, got {step}")
    if horizon < step:
        raise ViolatedBound("horizon", f"must be >= step, got {horizon} < {step}")

    d = params.delta
    rate_g = params.alpha * queues.lambda_g ** params.k
    rate_b = params.alpha * queues.lambda_b ** params.k

    def rhs(hg: float, lg: float, hb: float, lb: float):
        return (
            d * (lg - hg) + rate_b * hb,
            d * hg - (d + rate_g) * lg,
            d * lb - (d + rate_b) * hb,
            d * hb + rate_g * lg - d * lb,
        )

    mass = initial.seller_mass
    mass_tol = 1e-10 * max(1.0, mass)
    if record_stride is None:
        record_stride = max(1, int(round(horizon / step / DEFAULT_SNAPSHOTS)))

    hg, lg, hb, lb = initial.as_tuple()
    t = 0.0
    times = [0.0]
    states = [initial]
    halvings = 0
    steps_taken = 0
    while t < horizon * (1.0 - 1e-14):
        h = min(step, horizon - t)
        a1, b1, c1, d1 = rhs(hg, lg, hb, lb)
        a2, b2, c2, d2 = rhs(hg + 0.5 * h * a1, lg + 0.5 * h * b1, hb + 0.5 * h * c1, lb + 0.5 * h * d1)
        a3, b3, c3, d3 = rhs(hg + 0.5 * h * a2, lg + 0.5 * h * b2, hb + 0.5 * h * c2, lb + 0.5 * h * d2)
        a4, b4, c4, d4 = rhs(hg + h * a3, lg + h * b3, hb + h * c3, lb + h * d3)
        s = h / 6.0
        n_hg = hg + s * (a1 + 2.0 * (a2 + a3) + a4)
        n_lg = lg + s * (b1 + 2.0 * (b2 + b3) + b4)
        n_hb = hb + s * (c1 + 2.0 * (c2 + c3) + c4)
        n_lb = lb + s * (d1 + 2.0 * (d2 + d3) + d4)
        if n_hg < 0.0 or n_lg < 0.0 or n_hb < 0.0 or n_lb < 0.0:
            halvings += 1
            if halvings > MAX_STEP_HALVINGS:
                raise StepTooLarge(
                    f"mass went negative after {MAX_STEP_HALVINGS} step halvings"
                )
            step = 0.5 * step
            continue
        hg, lg, hb, lb = n_hg, n_lg, n_hb, n_lb
        t += h
        steps_taken += 1
        if abs((hg + lg + hb + lb) - mass) > mass_tol:
            raise ModelError(f"mass conservation broke at t={t}")
        if steps_taken % record_stride == 0 or t >= horizon * (1.0 - 1e-14):
            if t > times[-1]:
                times.append(t)
                states.append(SteadyState(hg, lg, hb, lb, mass))

    terminal = states[-1]
    residual = max(abs(r) for r in flow_residuals(terminal, queues, params))
    return FlowTrajectory(tuple(times), tuple(states), residual)


@dataclass(frozen=True)
class PopulationSample:
    """Time-averaged occupancy of a finite seller population.

    ``state`` holds the occupancy fractions (normalized to unit seller
    mass); ``std_errors`` are batch-means standard errors of the four
    fractions over ``batch_count`` equal slices of the averaging window.
    """

    state: SteadyState
    std_errors: tuple[float, float, float, float]
    batch_count: int


# Seller states are encoded 0=HG, 1=LG, 2=HB, 3=LB. Only state-changing
# events are simulated: a match only matters when it corrects the rating,
# which by thinning happens at rate alpha * (match rate of the submarket).
_HG, _LG, _HB, _LB = 0, 1, 2, 3


def simulate_population(
    n: int,
    queues: QueuePair,
    params: MarketParams,
    horizon: float,
    seed: int,
) -> PopulationSample:
    """Event-driven simulation of ``n`` independent sellers at fixed queues.

    Each seller's type flips at rate delta and her rating snaps to her type
    at rate alpha times her submarket's match rate. Occupancy is
    time-averaged over the second half of the horizon (the first half is
    burn-in) and split into equal batches for the standard errors. Output
    is a pure function of the arguments and the seed.
    """
    if n < 1:
        raise ViolatedBound("n", f"need at least one seller, got {n}")
    if horizon <= 0:
        raise ViolatedBound("horizon", f"must be > 0, got {horizon}")
    rng = np.random.default_rng(seed)
    d = params.delta
    rate_g = params.alpha * queues.lambda_g ** params.k
    rate_b = params.alpha * queues.lambda_b ** params.k
    leave_rate = np.array([d, d + rate_g, d + rate_b, d])
    # Probability the next LG / HB event is a type flip rather than a rating fix.
    p_flip_lg = d / (d + rate_g)
    p_flip_hb = d / (d + rate_b)

    window_start = 0.5 * horizon
    width = (horizon - window_start) / BATCHES
    occupancy = np.zeros((4, BATCHES))

    state = np.arange(n, dtype=np.int64) % 4
    t = np.zeros(n)
    while True:
        alive = t < horizon
        if not alive.any():
            break
        hold = rng.exponential(1.0, size=n) / leave_rate[state]
        t_next = t + hold
        seg_lo = np.maximum(t, window_start)
        seg_hi = np.minimum(t_next, horizon)
        if np.any(seg_hi > seg_lo):
            j_lo = max(0, int((seg_lo[alive].min() - window_start) / width))
            j_hi = min(BATCHES - 1, int((seg_hi[alive].max() - window_start) / width))
            for j in range(j_lo, j_hi + 1):
                edge = window_start + j * width
                overlap = np.clip(
                    np.minimum(seg_hi, edge + width) - np.maximum(seg_lo, edge), 0.0, None
                )
                occupancy[:, j] += np.bincount(state, weights=overlap, minlength=4)

        coin = rng.random(n)
        nxt = state.copy()
        nxt[state == _HG] = _LG
        nxt[state == _LB] = _HB
        from_lg = state == _LG
        nxt[from_lg] = np.where(coin[from_lg] < p_flip_lg, _HG, _LB)
        from_hb = state == _HB
        nxt[from_hb] = np.where(coin[from_hb] < p_flip_hb, _LB, _HG)
        fires = alive & (t_next < horizon)
        state = np.where(fires, nxt, state)
        t = t_next

    batch_means = occupancy / (n * width)
    fractions = batch_means.mean(axis=1)
    fractions = fractions / fractions.sum()
    errors = batch_means.std(axis=1, ddof=1) / math.sqrt(BATCHES)
    return PopulationSample(
        state=SteadyState(*fractions.tolist(), seller_mass=1.0),
        std_errors=tuple(errors.tolist()),
        batch_count=BATCHES,
    )


def trajectory_rows(trajectory: FlowTrajectory):
    """Yield (time, p_hg, p_lg, p_hb, p_lb) rows for delimited export."""
    for when, state in zip(trajectory.times, trajectory.states):
        yield (when, state.p_hg, state.p_lg, state.p_hb, state.p_lb)
