"""stoplab: an optimal-stopping laboratory.

Binomial-tree Snell envelopes, exhaustive stopping-rule oracles, random-walk /
Brownian pathwise couplings, and convergence diagnostics, wired to a
reproducible experiment CLI.
"""

__version__ = "0.1.0"

from .paths import (
    CadlagPath,
    TimeGrid,
    constant_path,
    discretize,
    restrict,
    skorokhod_j1_distance,
    sup_distance,
    uniform_grid,
)
from .processes import (
    BlackScholesParams,
    CouplingResult,
    InsufficientDriverError,
    crr_path_from_signs,
    knight_embedding,
    sample_black_scholes,
    sample_brownian,
)
from .trees import (
    BinomialModel,
    ParameterError,
    Payoff,
    SnellSolution,
    build_crr_model,
    exercise_boundary,
    optimal_rule,
    rational_exercise_rule,
    constant_payoff,
    put_payoff,
    snell_envelope,
    stopping_time_on_path,
)
from .stopping import (
    RandomizedRule,
    StoppingRule,
    StructuralError,
    brute_force_value,
    enumerate_rules,
    randomized_value,
    rule_from_mask,
    rule_value,
)
from .diagnostics import (
    EmpiricalDistribution,
    aldous_criterion_estimate,
    convergence_in_probability_estimate,
    filtration_convergence_probe,
    wasserstein1,
)

__all__ = [
    "__version__",
    "TimeGrid",
    "CadlagPath",
    "uniform_grid",
    "constant_path",
    "restrict",
    "discretize",
    "sup_distance",
    "skorokhod_j1_distance",
    "BlackScholesParams",
    "CouplingResult",
    "InsufficientDriverError",
    "sample_brownian",
    "sample_black_scholes",
    "knight_embedding",
    "crr_path_from_signs",
    "BinomialModel",
    "Payoff",
    "SnellSolution",
    "ParameterError",
    "constant_payoff",
    "put_payoff",
    "build_crr_model",
    "snell_envelope",
    "optimal_rule",
    "rational_exercise_rule",
    "stopping_time_on_path",
    "exercise_boundary",
    "StoppingRule",
    "RandomizedRule",
    "StructuralError",
    "rule_value",
    "rule_from_mask",
    "enumerate_rules",
    "brute_force_value",
    "randomized_value",
    "EmpiricalDistribution",
    "wasserstein1",
    "convergence_in_probability_estimate",
    "aldous_criterion_estimate",
    "filtration_convergence_probe",
]
