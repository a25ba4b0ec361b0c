"""Numerical laboratory for a ratings-guided matching market.

Sellers carry a hidden, churning type and a public binary rating that
transactions occasionally snap to the truth; buyers direct their search
across (rating, group) submarkets. The package provides the closed-form
stationary seller distribution, buyer payoffs, solvers for
non-discriminatory and discriminatory equilibria, existence windows in the
buyer endowment and the rating quality, a split-robustness stability test,
and two independent dynamics oracles that cross-check the closed forms.
"""

from .core import (
    ABS_TOL,
    EQ_TOL,
    LAMBDA_MAX,
    LAMBDA_MIN,
    MASS_TOL,
    Beliefs,
    BracketFailure,
    DegenerateQueue,
    Equilibrium,
    EquilibriumKind,
    FlowTrajectory,
    InvalidRegime,
    MarketParams,
    ModelError,
    MultipleEquilibria,
    OutOfBand,
    QueuePair,
    QueueQuad,
    Stability,
    SteadyState,
    StepTooLarge,
    ViolatedBound,
    validate_params,
)
from .dynamics import (
    PopulationSample,
    default_step,
    integrate_flows,
    simulate_population,
)
from .equilibrium import (
    BranchBand,
    BranchTriple,
    bi_curve,
    branch_band,
    branch_triple,
    discriminatory_mass_interval,
    enumerate_discriminatory,
    mc_curve,
    no_trade,
    rating_quality_interval,
    required_buyer_mass,
    rescale_queue,
    solve_nondiscriminatory,
)
from .mechanics import (
    beliefs,
    buyer_match_rate,
    buyer_payoff,
    buyer_payoff_slope,
    flow_residuals,
    k_threshold,
    participation_threshold,
    payoff_increasing_interval,
    payoff_slope_quadratic,
    seller_match_rate,
    steady_state,
)
from .stability import (
    DerivativeEstimate,
    StabilityReport,
    classify_stability,
    find_stable_discriminatory,
    group_payoff,
    group_payoff_slope,
    payoff_asymmetry,
)

__version__ = "0.1.0"
