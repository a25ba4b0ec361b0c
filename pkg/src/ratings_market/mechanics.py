"""Matching technology, closed-form steady state, beliefs, and buyer payoffs.

The seller match rate is the constant-returns Cobb-Douglas form ``lambda**k``
with elasticity ``k`` in (0, 1); the buyer rate is ``lambda**(k-1)``. All
results in this module are closed-form and vectorize over numpy arrays; the
equilibrium solvers lean on that for their grid pre-scans.
"""

from __future__ import annotations

import math

from .core import (
    Beliefs,
    DegenerateQueue,
    InvalidRegime,
    MarketParams,
    QueuePair,
    SteadyState,
)

RATING_GOOD = "G"
RATING_BAD = "B"

# Relative step for finite-difference payoff slopes; balances truncation
# against rounding at the queue scales that show up in practice.
FD_REL_STEP = 1e-6


def seller_match_rate(lam, k: float):
    """Rate at which a seller trades, given queue ratio ``lam``; vector-safe."""
    return lam ** k


def buyer_match_rate(lam: float, k: float) -> float:
    """Rate at which a buyer trades; diverges as the queue empties."""
    if lam <= 0:
        raise DegenerateQueue(f"buyer match rate is infinite at queue ratio {lam}")
    return float(lam) ** (k - 1.0)


def steady_state(queues: QueuePair, params: MarketParams, seller_mass: float = 1.0) -> SteadyState:
    """Closed-form stationary seller masses for one population.

    Solves the four flow-balance equations (type churn at rate delta, rating
    corrections at rate ``alpha * match rate``) for a population of total
    mass ``seller_mass``. When both match rates are zero no flow moves
    sellers between ratings; the returned state is then flagged
    ``indeterminate`` and holds the convention split (half the mass per
    rating, types 50/50), which keeps downstream classification
    deterministic.
    """
    if seller_mass <= 0:
        raise InvalidRegime(f"seller_mass must be > 0, got {seller_mass}")
    d, a = params.delta, params.alpha
    psi_g = queues.lambda_g ** params.k
    psi_b = queues.lambda_b ** params.k
    if psi_g == 0.0 and psi_b == 0.0:
        q = seller_mass / 4.0
        return SteadyState(q, q, q, q, seller_mass, indeterminate=True)
    den = 2.0 * (d * (psi_g + psi_b) + a * psi_g * psi_b)
    scale = seller_mass / den
    return SteadyState(
        p_hg=psi_b * (d + psi_g * a) * scale,
        p_lg=psi_b * d * scale,
        p_hb=psi_g * d * scale,
        p_lb=psi_g * (d + psi_b * a) * scale,
        seller_mass=seller_mass,
    )


def flow_residuals(
    state: SteadyState, queues: QueuePair, params: MarketParams
) -> tuple[float, float, float, float]:
    """Net inflow minus outflow for each (type, rating) cell.

    The four entries sum to zero identically: every flow is an internal
    transfer. All four vanish exactly at the stationary state.
    """
    d, a = params.delta, params.alpha
    psi_g = queues.lambda_g ** params.k
    psi_b = queues.lambda_b ** params.k
    hg, lg, hb, lb = state.as_tuple()
    return (
        lg * d + hb * psi_b * a - hg * d,
        hg * d - lg * (d + psi_g * a),
        lb * d - hb * (d + psi_b * a),
        hb * d + lg * psi_g * a - lb * d,
    )


def beliefs(queues: QueuePair, params: MarketParams) -> Beliefs:
    """Stationary probability that a G- / B-rated seller is high type.

    Each belief depends only on its own submarket's match rate: the G-side
    belief rises with more G-trade (bad types get weeded out faster) and the
    B-side belief falls with more B-trade. Both limit to 1/2 as the queue
    empties.
    """
    d, a = params.delta, params.alpha
    psi_g = queues.lambda_g ** params.k
    psi_b = queues.lambda_b ** params.k
    return Beliefs(
        mu_g=1.0 - d / (2.0 * d + psi_g * a),
        mu_b=d / (2.0 * d + psi_b * a),
    )


def _payoff_g(lam, params: MarketParams):
    """Buyer flow payoff in the G submarket; vector-safe, assumes lam > 0."""
    d, a = params.delta, params.alpha
    psi = lam ** params.k
    return lam ** (params.k - 1.0) * (
        (params.u_high - params.price)
        - (params.u_high - params.u_low) * d / (2.0 * d + psi * a)
    )


def _payoff_b(lam, params: MarketParams):
    """Buyer flow payoff in the B submarket; vector-safe, assumes lam > 0."""
    d, a = params.delta, params.alpha
    psi = lam ** params.k
    return lam ** (params.k - 1.0) * (
        d / (2.0 * d + psi * a) * (params.u_high - params.u_low)
        + params.u_low
        - params.price
    )


def buyer_payoff(rating: str, lam: float, params: MarketParams) -> float:
    """Flow payoff of a buyer searching the given rating's submarket.

    Combines the buyer match rate with the expected trade surplus at the
    stationary belief for that rating. Diverges as ``lam -> 0`` whenever the
    mean surplus exceeds the price, and vanishes as ``lam -> inf``.
    """
    if lam <= 0:
        raise DegenerateQueue(f"payoff is unbounded at queue ratio {lam}")
    if rating == RATING_GOOD:
        return float(_payoff_g(lam, params))
    if rating == RATING_BAD:
        return float(_payoff_b(lam, params))
    raise ValueError(f"rating must be {RATING_GOOD!r} or {RATING_BAD!r}, got {rating!r}")


def buyer_payoff_slope(rating: str, lam: float, params: MarketParams) -> float:
    """Central finite-difference slope of :func:`buyer_payoff` at ``lam``."""
    step = FD_REL_STEP * max(lam, 1.0)
    step = min(step, 0.5 * lam)
    hi = buyer_payoff(rating, lam + step, params)
    lo = buyer_payoff(rating, lam - step, params)
    return (hi - lo) / (2.0 * step)


def participation_threshold(params: MarketParams) -> float:
    """Belief below which searching a submarket cannot pay.

    May be <= 0, in which case every submarket with a positive queue yields
    a positive payoff.
    """
    return (params.price - params.u_low) / (params.u_high - params.u_low)


def _require_trade_regime(params: MarketParams) -> None:
    if 0.5 * (params.u_high + params.u_low) <= params.price:
        raise InvalidRegime(
            "mean surplus does not cover the price: "
            f"(u_high + u_low)/2 = {0.5 * (params.u_high + params.u_low)} <= price = {params.price}"
        )


def k_threshold(params: MarketParams) -> float:
    """Elasticity bound separating monotone from hump-shaped G payoffs.

    The G-submarket payoff is globally decreasing in its queue ratio exactly
    when ``k`` is at or below this value, which always lies in (1/2, 1].
    Only defined in the trade regime (mean surplus above price).
    """
    _require_trade_regime(params)
    radicand = 1.0 - (params.u_high - params.u_low) / (2.0 * (params.u_high - params.price))
    return 0.5 * (1.0 + math.sqrt(max(radicand, 0.0)))


def payoff_slope_quadratic(psi, params: MarketParams):
    """Quadratic in the match rate with the sign of the G-payoff slope.

    For ``psi = lam**k`` this expression has the same sign as
    ``d(buyer G payoff)/d(lam)``; its roots delimit the increasing stretch
    of the payoff curve. Vector-safe in ``psi``.
    """
    d, a, k = params.delta, params.alpha, params.k
    gap = params.u_high - params.u_low
    margin = params.u_high - params.price
    return (
        -(1.0 - k) * a * a * margin * psi * psi
        + (gap - 4.0 * (1.0 - k) * margin) * d * a * psi
        - 2.0 * (1.0 - k) * d * d * (params.u_high + params.u_low - 2.0 * params.price)
    )


def payoff_increasing_interval(params: MarketParams) -> tuple[float, float] | None:
    """Queue-ratio interval on which the G-submarket payoff rises.

    ``None`` when the payoff is globally monotone (``k <= k_threshold``).
    Otherwise the two positive roots of :func:`payoff_slope_quadratic`,
    mapped back from match-rate to queue-ratio space.
    """
    if params.k <= k_threshold(params):
        return None
    d, a, k = params.delta, params.alpha, params.k
    gap = params.u_high - params.u_low
    margin = params.u_high - params.price
    qa = -(1.0 - k) * a * a * margin
    qb = (gap - 4.0 * (1.0 - k) * margin) * d * a
    qc = -2.0 * (1.0 - k) * d * d * (params.u_high + params.u_low - 2.0 * params.price)
    # k just above the threshold can push the discriminant to -0.0 in floats.
    disc = max(qb * qb - 4.0 * qa * qc, 0.0)
    root = math.sqrt(disc)
    psi_pair = sorted(((-qb + root) / (2.0 * qa), (-qb - root) / (2.0 * qa)))
    inv_k = 1.0 / k
    return (psi_pair[0] ** inv_k, psi_pair[1] ** inv_k)
