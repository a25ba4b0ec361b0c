"""Equilibrium solvers for the ratings-guided market.

Two scalar conditions pin down a steady-state equilibrium for one seller
population: market clearing (the queue-weighted seller masses absorb the
whole buyer endowment) and buyer indifference (equal flow payoffs across the
G and B submarkets). This module computes both implicit curves, finds every
non-discriminatory intersection, enumerates discriminatory equilibria by
inverting the G-payoff on its three monotone segments, and derives the
buyer-mass and rating-quality windows on which discrimination can exist.

All root finding is bracketed bisection over a log-spaced pre-scan grid; the
grid sizes are fixed so repeated runs are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import (
    EQ_TOL,
    Equilibrium,
    EquilibriumKind,
    InvalidRegime,
    LAMBDA_MAX,
    LAMBDA_MIN,
    MarketParams,
    ModelError,
    OutOfBand,
    QueuePair,
    QueueQuad,
    ViolatedBound,
)
from .mechanics import (
    _payoff_b,
    _payoff_g,
    k_threshold,
    payoff_increasing_interval,
    steady_state,
)
from .rootfind import (
    bisect_geom,
    bisect_geom_many,
    expand_bracket_down,
    expand_bracket_up,
)

CURVE_GRID_POINTS = 2048  # log-spaced pre-scan for curve intersections
BAND_GRID_POINTS = 1024   # probe sweep across the branch band
MERGE_TOL = 1e-6          # max-norm below which two roots are the same


def no_trade(params: MarketParams) -> bool:
    """True when no buyer searches in any steady state.

    Holds exactly when the surplus of a coin-flip seller does not cover the
    price; beliefs in an inactive market are pinned at 1/2, so the condition
    is both necessary and sufficient.
    """
    return 0.5 * (params.u_high + params.u_low) <= params.price


def _no_trade_equilibrium() -> Equilibrium:
    idle = QueuePair(0.0, 0.0)
    return Equilibrium(
        kind=EquilibriumKind.NO_TRADE,
        queues=QueueQuad(idle, idle),
        buyer_payoff=0.0,
        buyer_split=(0.0, 0.0),
    )


def required_buyer_mass(
    queues: QueuePair, params: MarketParams, seller_mass: float = 1.0
) -> float:
    """Buyer mass absorbed by one seller population at the given queues.

    Queue ratios times the stationary seller masses of each rating class.
    Strictly increasing in each ratio; zero whenever either ratio is zero
    (one empty submarket starves the other of sellers in steady state).
    """
    state = steady_state(queues, params, seller_mass)
    return queues.lambda_g * state.mass_g + queues.lambda_b * state.mass_b


def _required_vec(lam_g, lam_b, params: MarketParams, seller_mass: float = 1.0):
    """Vectorized :func:`required_buyer_mass`; assumes positive queues."""
    d, a, k = params.delta, params.alpha, params.k
    psi_g = lam_g ** k
    psi_b = lam_b ** k
    den = 2.0 * (d * (psi_g + psi_b) + a * psi_g * psi_b)
    num = lam_g * psi_b * (2.0 * d + a * psi_g) + lam_b * psi_g * (2.0 * d + a * psi_b)
    return seller_mass * num / den


def mc_curve(
    lambda_g: float, buyer_mass: float, params: MarketParams, seller_mass: float = 1.0
) -> float:
    """B-queue ratio that clears the market at the given G-queue ratio.

    Unique because absorbed buyer mass rises strictly in the B queue; found
    by expanding a bracket from 1 and bisecting. Raises BracketFailure when
    the root lies outside the clamped queue domain.
    """
    if buyer_mass <= 0:
        raise ViolatedBound("buyer_mass", "market-clearing curve needs buyer_mass > 0")
    if lambda_g <= 0:
        raise ViolatedBound("lambda_g", "market-clearing curve needs lambda_g > 0")

    def gap(lam_b: float) -> float:
        return float(_required_vec(lambda_g, lam_b, params, seller_mass)) - buyer_mass

    start = gap(1.0)
    if start == 0.0:
        return 1.0
    if start < 0:
        lo, hi = expand_bracket_up(gap, 1.0)
    else:
        lo, hi = expand_bracket_down(gap, 1.0)
    return bisect_geom(gap, lo, hi)


def bi_curve(lambda_g: float, params: MarketParams) -> float:
    """B-queue ratio at which buyers are indifferent to the G submarket.

    Unique because the B payoff falls strictly through every positive level.
    Only defined in the trade regime, where the G payoff is positive.
    """
    if lambda_g <= 0:
        raise ViolatedBound("lambda_g", "indifference curve needs lambda_g > 0")
    if no_trade(params):
        raise InvalidRegime("indifference curve undefined in the no-trade regime")
    target = float(_payoff_g(lambda_g, params))

    def gap(lam_b: float) -> float:
        return float(_payoff_b(lam_b, params)) - target

    start = gap(1.0)
    if start == 0.0:
        return 1.0
    if start > 0:
        lo, hi = expand_bracket_up(gap, 1.0)
    else:
        lo, hi = expand_bracket_down(gap, 1.0)
    return bisect_geom(gap, lo, hi)


# ---------------------------------------------------------------------------
# Non-discriminatory equilibria
# ---------------------------------------------------------------------------


def _family(params: MarketParams) -> tuple:
    """Cache key for everything independent of the buyer endowment."""
    return (params.delta, params.alpha, params.u_high, params.u_low, params.price, params.k)


def _from_family(family: tuple) -> MarketParams:
    return MarketParams(*family, buyer_mass=0.0)


def _bi_inverse_vec(lam_g: np.ndarray, params: MarketParams) -> np.ndarray:
    """Vectorized indifference inversion; every entry must be invertible."""
    targets = _payoff_g(lam_g, params)
    return bisect_geom_many(
        lambda x: _payoff_b(x, params) - targets,
        np.full_like(lam_g, LAMBDA_MIN),
        np.full_like(lam_g, LAMBDA_MAX),
    )


@lru_cache(maxsize=64)
def _nd_scan(family: tuple) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pre-scan of the indifference curve and absorbed mass along it.

    Returns (grid, lambda_b_bi, absorbed) where entries are NaN wherever the
    indifference root escapes the clamped queue domain (only the extreme
    grid edges). The arrays are cached per parameter family and must be
    treated as read-only.
    """
    params = _from_family(family)
    grid = np.geomspace(LAMBDA_MIN, LAMBDA_MAX, CURVE_GRID_POINTS)
    targets = _payoff_g(grid, params)
    f_lo = _payoff_b(LAMBDA_MIN, params) - targets
    f_hi = _payoff_b(LAMBDA_MAX, params) - targets
    ok = (f_lo > 0) & (f_hi < 0)
    lam_b = np.full_like(grid, np.nan)
    if ok.any():
        sub = grid[ok]
        lam_b[ok] = bisect_geom_many(
            lambda x: _payoff_b(x, params) - targets[ok],
            np.full_like(sub, LAMBDA_MIN),
            np.full_like(sub, LAMBDA_MAX),
        )
    absorbed = np.full_like(grid, np.nan)
    absorbed[ok] = _required_vec(grid[ok], lam_b[ok], params)
    return grid, lam_b, absorbed


def _scan_cells(values: np.ndarray) -> tuple[list[int], list[int]]:
    """Indices of exact zeros and of sign-change cells among valid entries."""
    valid = ~np.isnan(values)
    zeros = [int(i) for i in np.flatnonzero(valid & (values == 0.0))]
    left, right = values[:-1], values[1:]
    change = valid[:-1] & valid[1:] & (left * right < 0)
    return zeros, [int(i) for i in np.flatnonzero(change)]


def _refine_nd_roots(
    lo: np.ndarray, hi: np.ndarray, buyer_mass: np.ndarray, params: MarketParams
) -> tuple[np.ndarray, np.ndarray]:
    """Polish clearing/indifference intersections inside bracketing cells."""

    def clearing_gap(lam_g: np.ndarray) -> np.ndarray:
        lam_b = _bi_inverse_vec(lam_g, params)
        return _required_vec(lam_g, lam_b, params) - buyer_mass

    lam_g = bisect_geom_many(clearing_gap, lo, hi)
    return lam_g, _bi_inverse_vec(lam_g, params)


def _merge_close(rows: list[tuple], tol: float = MERGE_TOL) -> list[tuple]:
    """Drop rows whose coordinate tuples sit within ``tol`` in max-norm."""
    kept: list[tuple] = []
    for row in rows:
        if all(max(abs(a - b) for a, b in zip(row, other)) > tol for other in kept):
            kept.append(row)
    return kept


def solve_nondiscriminatory(params: MarketParams) -> list[Equilibrium]:
    """All steady states in which the two groups are treated identically.

    In the no-trade regime (or with no buyers) the single inactive
    equilibrium is returned. Otherwise every intersection of the
    market-clearing and buyer-indifference curves resolved by the pre-scan
    grid is bisected to tolerance and returned sorted by the G queue. At
    least one intersection always exists in the trade regime.
    """
    if no_trade(params) or params.buyer_mass == 0.0:
        return [_no_trade_equilibrium()]
    grid, _, absorbed = _nd_scan(_family(params))
    gap = absorbed - params.buyer_mass
    zeros, cells = _scan_cells(gap)

    roots: list[tuple[float, float]] = []
    for i in zeros:
        lam_g = float(grid[i])
        roots.append((lam_g, bi_curve(lam_g, params)))
    if cells:
        lo = grid[np.asarray(cells, dtype=int)]
        hi = grid[np.asarray(cells, dtype=int) + 1]
        q_arr = np.full(len(cells), params.buyer_mass)
        lam_g, lam_b = _refine_nd_roots(lo, hi, q_arr, params)
        roots.extend(zip(lam_g.tolist(), lam_b.tolist()))

    merged = _merge_close(sorted(roots))
    out = []
    for lam_g, lam_b in merged:
        pair = QueuePair(lam_g, lam_b)
        payoff_g = float(_payoff_g(lam_g, params))
        payoff_b = float(_payoff_b(lam_b, params))
        if abs(payoff_g - payoff_b) > EQ_TOL * max(1.0, abs(payoff_b)):
            raise ModelError(
                f"indifference residual {payoff_g - payoff_b} above tolerance at {pair}"
            )
        half = 0.5 * params.buyer_mass
        out.append(
            Equilibrium(
                kind=EquilibriumKind.NON_DISCRIMINATORY,
                queues=QueueQuad(pair, pair),
                buyer_payoff=payoff_b,
                buyer_split=(half, half),
            )
        )
    if not out:
        raise ModelError(
            "no intersection of the clearing and indifference curves was "
            f"resolved by the {CURVE_GRID_POINTS}-point pre-scan; this "
            "contradicts existence in the trade regime"
        )
    return out


# ---------------------------------------------------------------------------
# Discriminatory equilibria
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BranchBand:
    """Geometry of the non-monotone stretch of the G payoff.

    ``lambda_g_lo``/``lambda_g_hi`` bound the increasing stretch, where the
    payoff has its local minimum and maximum; ``lambda_b_lo``/``lambda_b_hi``
    are the B queues indifferent to those two payoff levels. Probing a B
    queue inside that band yields three G queues with the same payoff.
    """

    lambda_g_lo: float
    lambda_g_hi: float
    payoff_min: float
    payoff_max: float
    lambda_b_lo: float
    lambda_b_hi: float


@lru_cache(maxsize=64)
def _branch_band_cached(family: tuple) -> BranchBand:
    params = _from_family(family)
    interval = payoff_increasing_interval(params)
    if interval is None:
        raise InvalidRegime(
            "the G payoff is monotone (k <= k_threshold); no branch band exists"
        )
    lam_lo, lam_hi = interval
    payoff_min = float(_payoff_g(lam_lo, params))
    payoff_max = float(_payoff_g(lam_hi, params))
    # Larger payoff target means a shorter B queue, so the band endpoints swap.
    return BranchBand(
        lambda_g_lo=lam_lo,
        lambda_g_hi=lam_hi,
        payoff_min=payoff_min,
        payoff_max=payoff_max,
        lambda_b_lo=bi_curve(lam_hi, params),
        lambda_b_hi=bi_curve(lam_lo, params),
    )


def branch_band(params: MarketParams) -> BranchBand:
    """Branch geometry for these parameters; needs k above the threshold."""
    if no_trade(params):
        raise InvalidRegime("no branch band in the no-trade regime")
    return _branch_band_cached(_family(params))


@dataclass(frozen=True)
class BranchTriple:
    """The up-to-three G queues matching one B queue's payoff.

    ``h1 <= h2 <= h3`` always; at the band edges two of them coincide and
    ``multiplicity`` drops accordingly.
    """

    lambda_b: float
    h1: float
    h2: float
    h3: float
    multiplicity: int

    def branches(self) -> tuple[float, float, float]:
        return (self.h1, self.h2, self.h3)


def branch_triple(lambda_b: float, params: MarketParams) -> BranchTriple:
    """Solve the G payoff back out of the B payoff on all three segments.

    The G payoff falls, rises, and falls again across the band, so each
    segment is monotone and bisection on it is exact. ``lambda_b`` must lie
    inside the branch band.
    """
    band = branch_band(params)
    slack = 1e-9 * max(1.0, band.lambda_b_hi)
    if not band.lambda_b_lo - slack <= lambda_b <= band.lambda_b_hi + slack:
        raise OutOfBand(
            f"lambda_b={lambda_b} outside the branch band "
            f"[{band.lambda_b_lo}, {band.lambda_b_hi}]"
        )
    target = float(_payoff_b(lambda_b, params))
    target = min(max(target, band.payoff_min), band.payoff_max)

    def gap(lam: float) -> float:
        return float(_payoff_g(lam, params)) - target

    h1 = bisect_geom(gap, LAMBDA_MIN, band.lambda_g_lo)
    h2 = bisect_geom(gap, band.lambda_g_lo, band.lambda_g_hi)
    h3 = bisect_geom(gap, band.lambda_g_hi, LAMBDA_MAX)
    distinct = 1
    if h2 - h1 > MERGE_TOL * max(1.0, h2):
        distinct += 1
    if h3 - h2 > MERGE_TOL * max(1.0, h3):
        distinct += 1
    return BranchTriple(lambda_b=lambda_b, h1=h1, h2=h2, h3=h3, multiplicity=distinct)


_BRANCH_PAIRS = ((0, 1), (1, 2), (0, 2))


def _band_sweep(params: MarketParams):
    """Branch triples and per-group absorbed masses across the band grid."""
    band = branch_band(params)
    lam_b = np.geomspace(band.lambda_b_lo, band.lambda_b_hi, BAND_GRID_POINTS)
    targets = _payoff_b(lam_b, params)
    targets = np.clip(targets, band.payoff_min, band.payoff_max)

    def invert_on(lo: float, hi: float) -> np.ndarray:
        return bisect_geom_many(
            lambda x: _payoff_g(x, params) - targets,
            np.full_like(lam_b, lo),
            np.full_like(lam_b, hi),
        )

    branches = np.stack(
        [
            invert_on(LAMBDA_MIN, band.lambda_g_lo),
            invert_on(band.lambda_g_lo, band.lambda_g_hi),
            invert_on(band.lambda_g_hi, LAMBDA_MAX),
        ]
    )
    per_group = np.stack([_required_vec(branches[m], lam_b, params, 0.5) for m in range(3)])
    return band, lam_b, branches, per_group


def _group_mass(lam_g: float, lam_b: float, params: MarketParams) -> float:
    """Buyer mass one group (seller mass 1/2) absorbs at these queues."""
    return required_buyer_mass(QueuePair(lam_g, lam_b), params, seller_mass=0.5)


def enumerate_discriminatory(params: MarketParams) -> list[Equilibrium]:
    """Every steady state in which the groups face different G queues.

    Exists only when the G payoff is non-monotone: then each B queue inside
    the branch band supports three G queues with equal payoffs, and any two
    distinct ones can serve as the two groups' queues provided the buyer
    masses they absorb sum to the economy's endowment. Sweeps the band for
    each unordered branch pair and bisects the clearing residual.
    """
    if no_trade(params) or params.buyer_mass <= 0.0:
        return []
    if params.k <= k_threshold(params):
        return []
    band, lam_b_grid, _, per_group = _band_sweep(params)

    found: list[tuple[float, float, float]] = []
    for m, mm in _BRANCH_PAIRS:
        total = per_group[m] + per_group[mm] - params.buyer_mass
        zeros, cells = _scan_cells(total)
        probes = [float(lam_b_grid[i]) for i in zeros]
        for i in cells:
            def clearing_gap(lam_b: float, _m=m, _mm=mm) -> float:
                triple = branch_triple(lam_b, params).branches()
                return (
                    _group_mass(triple[_m], lam_b, params)
                    + _group_mass(triple[_mm], lam_b, params)
                    - params.buyer_mass
                )

            probes.append(bisect_geom(clearing_gap, float(lam_b_grid[i]), float(lam_b_grid[i + 1])))
        for lam_b in probes:
            triple = branch_triple(lam_b, params).branches()
            first, second = triple[m], triple[mm]
            if abs(first - second) <= MERGE_TOL * max(1.0, abs(second)):
                continue  # band-edge coincidence: not genuinely discriminatory
            found.append((max(first, second), min(first, second), lam_b))

    out = []
    for lam_g1, lam_g2, lam_b in _merge_close(sorted(found)):
        q1 = _group_mass(lam_g1, lam_b, params)
        q2 = _group_mass(lam_g2, lam_b, params)
        payoff = float(_payoff_b(lam_b, params))
        for lam_g in (lam_g1, lam_g2):
            residual = float(_payoff_g(lam_g, params)) - payoff
            if abs(residual) > EQ_TOL * max(1.0, abs(payoff)):
                raise ModelError(f"cross-submarket payoff residual {residual} at {lam_g}")
        out.append(
            Equilibrium(
                kind=EquilibriumKind.DISCRIMINATORY,
                queues=QueueQuad(QueuePair(lam_g1, lam_b), QueuePair(lam_g2, lam_b)),
                buyer_payoff=payoff,
                buyer_split=(q1, q2),
            )
        )
    return out


def discriminatory_mass_interval(params: MarketParams) -> tuple[float, float] | None:
    """Buyer-mass window on which discriminatory equilibria exist.

    ``None`` when the G payoff is monotone. Otherwise the range of total
    absorbed mass over the band sweep, unioned across branch pairs; the pair
    ranges touch at the band edges, and connectedness of the union is
    checked rather than assumed.
    """
    if no_trade(params) or params.k <= k_threshold(params):
        return None
    _, _, _, per_group = _band_sweep(params)
    ranges = []
    for m, mm in _BRANCH_PAIRS:
        total = per_group[m] + per_group[mm]
        ranges.append((float(total.min()), float(total.max())))
    ranges.sort()
    slack = MERGE_TOL * max(1.0, ranges[-1][1])
    reach = ranges[0][1]
    for lo, hi in ranges[1:]:
        if lo > reach + slack:
            raise ModelError(
                f"branch-pair mass ranges are disconnected: gap ({reach}, {lo})"
            )
        reach = max(reach, hi)
    return (ranges[0][0], reach)


# ---------------------------------------------------------------------------
# Rating-quality rescaling
# ---------------------------------------------------------------------------


def rescale_queue(lam: float, beta: float, k: float) -> float:
    """Map a queue ratio into the unit-rating-quality coordinate system.

    With ``beta = alpha/delta``, the market with endowment Q and quality
    beta has exactly the equilibria of the market with endowment
    ``Q * beta**(1/k)`` and quality 1, under this change of variables.
    """
    if beta <= 0:
        raise ViolatedBound("beta", f"rating quality must be > 0, got {beta}")
    return lam * beta ** (1.0 / k)


def rating_quality_interval(params: MarketParams) -> tuple[float, float] | None:
    """Rating-quality window on which discriminatory equilibria exist.

    Computed by rescaling: the mass interval of the normalized system
    (delta = alpha = 1) maps through the buyer endowment. ``None`` when the
    G payoff is monotone (the threshold does not involve delta or alpha).
    """
    if params.buyer_mass <= 0:
        raise ViolatedBound("buyer_mass", "rating-quality interval needs buyer_mass > 0")
    if no_trade(params) or params.k <= k_threshold(params):
        return None
    normalized = MarketParams(
        delta=1.0,
        alpha=1.0,
        u_high=params.u_high,
        u_low=params.u_low,
        price=params.price,
        k=params.k,
        buyer_mass=params.buyer_mass,
    )
    interval = discriminatory_mass_interval(normalized)
    q_lo, q_hi = interval
    return ((q_lo / params.buyer_mass) ** params.k, (q_hi / params.buyer_mass) ** params.k)
