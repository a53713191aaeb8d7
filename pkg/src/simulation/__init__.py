from .dgp import (
    DGP_KINDS,
    DgpSpec,
    chain_theta,
    dgp_problem,
    efficient_variance,
    oracle_conditionals,
    sample_dgp,
    stationary_distribution,
    true_theta,
)
from .monte_carlo import (
    Comparison,
    MonteCarloResult,
    RepOutcome,
    compare_estimators,
    run_monte_carlo,
    outcomes_from_frame,
    run_rep,
    summarize,
)
