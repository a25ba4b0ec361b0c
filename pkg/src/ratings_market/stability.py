"""Stability of the buyer split across the two seller groups.

Any steady state is summarized by the buyer masses (Q1, Q2) attached to the
groups; the group payoff function U gives each group's common buyer payoff
when it is served by a given buyer mass. A split is stable when nudging a
sliver of buyers from one group to the other lowers the movers' payoff,
which reduces to U'(Q1) + U'(Q2) <= 0. The stable-discriminatory search
scans the payoff asymmetry g(x) = U(Q/2 + x) - U(Q/2 - x) for its largest
root, where the asymmetry is falling and the split is therefore stable.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import (
    Equilibrium,
    EquilibriumKind,
    InvalidRegime,
    MarketParams,
    MultipleEquilibria,
    QueueQuad,
    Stability,
    ViolatedBound,
)
from .equilibrium import _family, _nd_scan, _refine_nd_roots, no_trade, solve_nondiscriminatory
from .mechanics import _payoff_b, k_threshold
from .rootfind import bisect

G_SCAN_POINTS = 512       # asymmetry evaluations across [0, Q/2)
G_SCAN_MARGIN = 1e-4      # relative stand-off from the Q/2 blow-up
DERIV_REL_STEP = 1e-5     # relative step for the payoff derivative
KINK_REL_TOL = 1e-3       # one-sided slope disagreement worth reporting


def _group_payoff_many(masses: np.ndarray, params: MarketParams) -> np.ndarray:
    """Group payoff U at each per-group buyer mass, enforcing uniqueness.

    A group of seller mass 1/2 served by buyer mass q trades exactly like
    the whole unit population served by 2q, so each evaluation solves the
    one-population problem at endowment 2q. Raises MultipleEquilibria the
    moment any endowment admits more than one solution: a multi-valued U
    would silently corrupt every derivative built on it.
    """
    if no_trade(params):
        raise InvalidRegime("group payoff undefined in the no-trade regime")
    if np.any(masses <= 0):
        raise ViolatedBound("q", "group payoff needs a positive buyer mass")
    grid, lam_b_scan, absorbed = _nd_scan(_family(params))
    gap = absorbed[None, :] - 2.0 * masses[:, None]
    valid = ~np.isnan(absorbed)
    change = valid[None, :-1] & valid[None, 1:] & (gap[:, :-1] * gap[:, 1:] < 0)
    exact = valid[None, :] & (gap == 0.0)
    counts = change.sum(axis=1) + exact.sum(axis=1)
    bad = np.flatnonzero(counts != 1)
    if bad.size:
        i = int(bad[0])
        raise MultipleEquilibria(2.0 * float(masses[i]), int(counts[i]))

    out = np.empty(masses.shape, dtype=float)
    hit = exact.any(axis=1)
    if hit.any():
        out[hit] = _payoff_b(lam_b_scan[exact[hit].argmax(axis=1)], params)
    todo = ~hit
    if todo.any():
        cell = change[todo].argmax(axis=1)
        _, lam_b = _refine_nd_roots(
            grid[cell], grid[cell + 1], 2.0 * masses[todo], params
        )
        out[todo] = _payoff_b(lam_b, params)
    return out


def group_payoff(q: float, params: MarketParams) -> float:
    """Equilibrium buyer payoff for one group served by buyer mass ``q``."""
    return float(_group_payoff_many(np.array([float(q)]), params)[0])


@dataclass(frozen=True)
class DerivativeEstimate:
    """Central-difference derivative with its one-sided components."""

    value: float
    step: float
    forward: float
    backward: float

    @property
    def kinked(self) -> bool:
        """True when the one-sided slopes disagree enough to matter."""
        scale = max(abs(self.forward), abs(self.backward), 1e-300)
        return abs(self.forward - self.backward) > KINK_REL_TOL * scale


def group_payoff_slope(q: float, params: MarketParams) -> DerivativeEstimate:
    """Finite-difference derivative of the group payoff at ``q``."""
    q = float(q)
    step = DERIV_REL_STEP * max(q, 1.0)
    if step >= q:
        step = 0.5 * q
    up, mid, down = _group_payoff_many(np.array([q + step, q, q - step]), params)
    return DerivativeEstimate(
        value=(up - down) / (2.0 * step),
        step=step,
        forward=(up - mid) / step,
        backward=(mid - down) / step,
    )


@dataclass(frozen=True)
class StabilityReport:
    """Verdict and the payoff sensitivities behind it."""

    equilibrium: Equilibrium
    u_prime_q1: DerivativeEstimate
    u_prime_q2: DerivativeEstimate
    criterion_value: float
    verdict: Stability


def classify_stability(eq: Equilibrium, params: MarketParams) -> StabilityReport:
    """Apply the split-robustness criterion to a trading equilibrium.

    Stable when U'(Q1) + U'(Q2) <= 0 (the boundary counts as stable). For a
    non-discriminatory equilibrium both terms coincide, so the verdict is
    the sign of the slope at half the endowment.
    """
    if eq.kind is EquilibriumKind.NO_TRADE:
        raise InvalidRegime("stability is not defined for the no-trade equilibrium")
    q1, q2 = eq.buyer_split
    d1 = group_payoff_slope(q1, params)
    d2 = d1 if q2 == q1 else group_payoff_slope(q2, params)
    criterion = d1.value + d2.value
    verdict = Stability.STABLE if criterion <= 0 else Stability.UNSTABLE
    return StabilityReport(
        equilibrium=replace(eq, stability=verdict),
        u_prime_q1=d1,
        u_prime_q2=d2,
        criterion_value=criterion,
        verdict=verdict,
    )


def payoff_asymmetry(x: float, total_mass: float, params: MarketParams) -> float:
    """g(x): payoff gap between a group favored by ``x`` and one starved by it."""
    if not 0.0 <= x < 0.5 * total_mass:
        raise ViolatedBound("x", f"asymmetry needs 0 <= x < Q/2, got x={x}, Q={total_mass}")
    if x == 0.0:
        return 0.0
    both = _group_payoff_many(
        np.array([0.5 * total_mass + x, 0.5 * total_mass - x]), params
    )
    return float(both[0] - both[1])


def find_stable_discriminatory(
    total_mass: float, params: MarketParams
) -> Equilibrium | None:
    """Largest-asymmetry discriminatory equilibrium, classified for stability.

    Scans the payoff asymmetry on [0, Q/2), takes its largest positive root
    (the asymmetry is negative just below Q/2 because a starved group's
    payoff blows up), rebuilds the two groups' queues at their buyer masses,
    and attaches the criterion verdict. ``None`` when no positive root
    exists, which is exactly when no discriminatory equilibrium exists.
    """
    if total_mass <= 0:
        raise ViolatedBound("buyer_mass", "need a positive buyer endowment")
    if no_trade(params) or params.k <= k_threshold(params):
        return None
    half = 0.5 * total_mass
    xs = np.linspace(0.0, half * (1.0 - 2.0 * G_SCAN_MARGIN), G_SCAN_POINTS)
    payoffs = _group_payoff_many(np.concatenate([half + xs, half - xs]), params)
    g = payoffs[:G_SCAN_POINTS] - payoffs[G_SCAN_POINTS:]

    root = None
    interior_zero = np.flatnonzero((g == 0.0) & (xs > 0))
    if interior_zero.size:
        root = float(xs[interior_zero[-1]])
    change = np.flatnonzero(g[:-1] * g[1:] < 0)
    if change.size:
        i = int(change[-1])
        cell_root = bisect(
            lambda x: payoff_asymmetry(x, total_mass, params),
            float(xs[i]),
            float(xs[i + 1]),
        )
        root = cell_root if root is None else max(root, cell_root)
    if root is None:
        return None

    q_small, q_large = half - root, half + root
    eq_small = solve_nondiscriminatory(replace(params, buyer_mass=2.0 * q_small))[0]
    eq_large = solve_nondiscriminatory(replace(params, buyer_mass=2.0 * q_large))[0]
    # Group 1 is canonically the one with the larger G queue.
    pairs = [
        (eq_small.queues.group1, q_small),
        (eq_large.queues.group1, q_large),
    ]
    pairs.sort(key=lambda item: item[0].lambda_g, reverse=True)
    (pair1, mass1), (pair2, mass2) = pairs

    d1 = group_payoff_slope(mass1, params)
    d2 = group_payoff_slope(mass2, params)
    criterion = d1.value + d2.value
    verdict = Stability.STABLE if criterion <= 0 else Stability.UNSTABLE
    return Equilibrium(
        kind=EquilibriumKind.DISCRIMINATORY,
        queues=QueueQuad(pair1, pair2),
        buyer_payoff=float(_payoff_b(pair1.lambda_b, params)),
        buyer_split=(mass1, mass2),
        stability=verdict,
    )
