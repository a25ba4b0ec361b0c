"""Domain types, parameter validation, and shared numeric conventions.

Everything downstream (mechanics, solvers, stability, dynamics, CLI) imports
its tolerances and value types from here. All types are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

# Centralized tolerances: one source so tests and solvers agree.
ABS_TOL = 1e-10   # root residuals (market clearing, indifference)
MASS_TOL = 1e-12  # seller-mass conservation
EQ_TOL = 1e-8     # cross-submarket payoff equality

# Queue-ratio domain used when bracketing roots. Payoffs diverge at 0, so
# bracket searches never probe below LAMBDA_MIN; LAMBDA_MAX caps expansion.
LAMBDA_MIN = 1e-12
LAMBDA_MAX = 1e6


class ModelError(Exception):
    """Base class for every error this package raises on purpose."""


class ViolatedBound(ModelError):
    """A parameter record failed validation; ``name`` identifies the bound."""

    def __init__(self, name: str, message: str):
        super().__init__(f"{name}: {message}")
        self.name = name


class DegenerateQueue(ModelError):
    """A buyer-side rate was requested at queue ratio 0, where it diverges."""


class InvalidRegime(ModelError):
    """The requested quantity is undefined in this parameter regime."""


class BracketFailure(ModelError):
    """A sign-change bracket could not be found inside the queue domain."""


class OutOfBand(ModelError):
    """A probe value fell outside the branch band it must lie in."""


class MultipleEquilibria(ModelError):
    """The unique-equilibrium restriction failed at some buyer mass."""

    def __init__(self, buyer_mass: float, count: int):
        super().__init__(
            f"found {count} non-discriminatory equilibria at buyer mass "
            f"{buyer_mass!r}; the stability analysis requires exactly one"
        )
        self.buyer_mass = buyer_mass
        self.count = count


class StepTooLarge(ModelError):
    """Flow integration kept producing negative masses after 20 halvings."""


def _require_finite(name: str, value) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ViolatedBound(name, f"not a real number: {value!r}") from None
    if not math.isfinite(out):
        raise ViolatedBound(name, f"must be finite, got {out!r}")
    return out


@dataclass(frozen=True)
class MarketParams:
    """Exogenous market primitives.

    Attributes
    ----------
    delta:
        Rate at which a seller's type flips (per unit time, > 0).
    alpha:
        Probability a transaction resets the rating to the true type, (0, 1].
    u_high, u_low:
        Trade surplus with a high / low type seller; u_high > u_low >= 0.
    price:
        Transfer paid to the seller per trade; 0 <= price < u_high.
    k:
        Matching elasticity of the seller match rate lambda**k, in (0, 1).
    buyer_mass:
        Total measure of buyers, >= 0.
    """

    delta: float
    alpha: float
    u_high: float
    u_low: float
    price: float
    k: float
    buyer_mass: float

    def __post_init__(self):
        for name in ("delta", "alpha", "u_high", "u_low", "price", "k", "buyer_mass"):
            object.__setattr__(self, name, _require_finite(name, getattr(self, name)))
        if self.delta <= 0:
            raise ViolatedBound("delta", f"must be > 0, got {self.delta}")
        if not 0 < self.alpha <= 1:
            raise ViolatedBound("alpha", f"must lie in (0, 1], got {self.alpha}")
        if not 0 < self.k < 1:
            raise ViolatedBound("k", f"must lie in the open interval (0, 1), got {self.k}")
        if self.u_low < 0:
            raise ViolatedBound("u_low", f"must be >= 0, got {self.u_low}")
        if self.u_high <= self.u_low:
            raise ViolatedBound("u_high>u_low", f"need u_high > u_low, got {self.u_high} <= {self.u_low}")
        if self.price < 0:
            raise ViolatedBound("price", f"must be >= 0, got {self.price}")
        if self.u_high <= self.price:
            raise ViolatedBound("u_high>price", f"need u_high > price, got {self.u_high} <= {self.price}")
        if self.buyer_mass < 0:
            raise ViolatedBound("buyer_mass", f"must be >= 0, got {self.buyer_mass}")

    @property
    def rating_quality(self) -> float:
        """alpha/delta: correction speed relative to type churn."""
        return self.alpha / self.delta


PARAM_FIELDS = ("delta", "alpha", "u_high", "u_low", "price", "k", "buyer_mass")


def validate_params(raw: Mapping[str, object]) -> MarketParams:
    """Build a validated :class:`MarketParams` from a name/value record.

    Raises :class:`ViolatedBound` naming the offending field for any record
    that cannot be accepted: missing or unknown keys, non-numeric values, or
    a violated model bound. Never raises anything else on finite input.
    """
    unknown = sorted(set(raw) - set(PARAM_FIELDS), key=str)
    if unknown:
        raise ViolatedBound(str(unknown[0]), "unknown parameter name")
    missing = [name for name in PARAM_FIELDS if name not in raw]
    if missing:
        raise ViolatedBound(missing[0], "missing required parameter")
    return MarketParams(**{name: _require_finite(name, raw[name]) for name in PARAM_FIELDS})


@dataclass(frozen=True)
class QueuePair:
    """Buyer-to-seller ratios for one seller population's two submarkets."""

    lambda_g: float
    lambda_b: float

    def __post_init__(self):
        for name in ("lambda_g", "lambda_b"):
            value = _require_finite(name, getattr(self, name))
            object.__setattr__(self, name, value)
            if value < 0:
                raise ViolatedBound(name, f"queue ratio must be >= 0, got {value}")


@dataclass(frozen=True)
class QueueQuad:
    """Queue ratios for both groups (four submarkets)."""

    group1: QueuePair
    group2: QueuePair


@dataclass(frozen=True)
class SteadyState:
    """Seller masses by (type, rating) for one seller population.

    ``indeterminate`` marks the fully inactive market (both match rates 0),
    where any rating split is self-consistent and the stored masses are the
    fixed convention: half the mass per rating, types 50/50.
    """

    p_hg: float
    p_lg: float
    p_hb: float
    p_lb: float
    seller_mass: float
    indeterminate: bool = False

    def __post_init__(self):
        for name in ("p_hg", "p_lg", "p_hb", "p_lb"):
            if getattr(self, name) < 0:
                raise ViolatedBound(name, f"mass must be >= 0, got {getattr(self, name)}")
        if self.seller_mass <= 0:
            raise ViolatedBound("seller_mass", f"must be > 0, got {self.seller_mass}")
        total = self.p_hg + self.p_lg + self.p_hb + self.p_lb
        if abs(total - self.seller_mass) > MASS_TOL * max(1.0, self.seller_mass):
            raise ViolatedBound(
                "mass_conservation",
                f"masses sum to {total!r}, expected {self.seller_mass!r}",
            )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.p_hg, self.p_lg, self.p_hb, self.p_lb)

    @property
    def mass_g(self) -> float:
        return self.p_hg + self.p_lg

    @property
    def mass_b(self) -> float:
        return self.p_hb + self.p_lb


@dataclass(frozen=True)
class Beliefs:
    """Steady-state probability that a G- / B-rated seller is high type."""

    mu_g: float
    mu_b: float

    def __post_init__(self):
        if not 0.5 - MASS_TOL <= self.mu_g < 1.0:
            raise ViolatedBound("mu_g", f"must lie in [1/2, 1), got {self.mu_g}")
        if not 0.0 < self.mu_b <= 0.5 + MASS_TOL:
            raise ViolatedBound("mu_b", f"must lie in (0, 1/2], got {self.mu_b}")


class EquilibriumKind(Enum):
    NO_TRADE = "no_trade"
    NON_DISCRIMINATORY = "non_discriminatory"
    DISCRIMINATORY = "discriminatory"


class Stability(Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    NOT_ASSESSED = "not_assessed"


@dataclass(frozen=True)
class Equilibrium:
    """A classified steady-state solution.

    For non-discriminatory equilibria both groups carry identical queue
    pairs; for no-trade all queues are zero. ``buyer_split`` is the buyer
    mass attached to each group; it sums to the economy's buyer mass except
    in the no-trade case. Group 1 is canonically the group with the larger
    G-submarket queue.
    """

    kind: EquilibriumKind
    queues: QueueQuad
    buyer_payoff: float
    buyer_split: tuple[float, float]
    stability: Stability = Stability.NOT_ASSESSED

    @property
    def lambda_g(self) -> float:
        """Group-1 G-submarket queue (the common one when non-discriminatory)."""
        return self.queues.group1.lambda_g

    @property
    def lambda_b(self) -> float:
        return self.queues.group1.lambda_b


@dataclass(frozen=True)
class FlowTrajectory:
    """Time series of seller masses produced by the flow integrator."""

    times: tuple[float, ...]
    states: tuple[SteadyState, ...] = field(repr=False)
    terminal_residual: float

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ViolatedBound("times", "times and states must have equal length")
        for earlier, later in zip(self.times, self.times[1:]):
            if later <= earlier:
                raise ViolatedBound("times", "timestamps must be strictly increasing")

    @property
    def terminal(self) -> SteadyState:
        return self.states[-1]
