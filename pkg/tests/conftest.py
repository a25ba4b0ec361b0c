import numpy as np
import pytest

from ratings_market import MarketParams


@pytest.fixture
def humped_params():
    """Payoff-curve demo family, elasticity above the monotonicity threshold."""
    return MarketParams(
        delta=0.1, alpha=0.1, u_high=2.0, u_low=1.0, price=1.0, k=0.8828, buyer_mass=1.0
    )


@pytest.fixture
def monotone_params():
    """Same family as ``humped_params`` but with a globally falling G payoff."""
    return MarketParams(
        delta=0.1, alpha=0.1, u_high=2.0, u_low=1.0, price=1.0, k=0.7682, buyer_mass=1.0
    )


@pytest.fixture
def crossing_params():
    """Curve-crossing demo family; k barely above the threshold, unique crossing."""
    return MarketParams(
        delta=1.0, alpha=0.1, u_high=2.0, u_low=1.0, price=1.0, k=0.8682, buyer_mass=1.0
    )


@pytest.fixture
def branching_params():
    """Branch-band demo family with a low-price-margin B market."""
    return MarketParams(
        delta=0.2, alpha=0.5, u_high=3.0, u_low=1.0, price=1.5, k=0.8204, buyer_mass=0.08
    )


def draw_trade_params(rng: np.random.Generator, q_range=(0.05, 20.0)) -> MarketParams:
    """Random parameters in the trade regime (mean surplus above price)."""
    u_low = rng.uniform(0.0, 2.0)
    u_high = u_low + rng.uniform(0.2, 3.0)
    mean = 0.5 * (u_high + u_low)
    price = rng.uniform(0.0, 0.95 * mean)
    return MarketParams(
        delta=float(np.exp(rng.uniform(np.log(0.05), np.log(2.0)))),
        alpha=rng.uniform(0.05, 1.0),
        u_high=u_high,
        u_low=u_low,
        price=price,
        k=rng.uniform(0.3, 0.95),
        buyer_mass=float(np.exp(rng.uniform(np.log(q_range[0]), np.log(q_range[1])))),
    )
