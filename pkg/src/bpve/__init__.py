"""Nearly critical branching processes in varying environment: exact evolution and limit laws."""

from bpve.environment import (
    EnvironmentSpec,
    ExplicitFamily,
    ExplicitImmigration,
    FiniteSupport,
    PoissonMean,
    QuadraticFamily,
    check_conditions,
    immigration_at,
    offspring_at,
    toeplitz_weight,
    toeplitz_weights,
)
from bpve.exact import (
    EvolutionResult,
    conditional_law,
    conditional_mean,
    evolve_x,
    evolve_x_many,
    evolve_y,
    evolve_y_many,
    tv_distance,
)
from bpve.limits import (
    A_coefficients,
    B_closed_form,
    CompoundPoissonLaw,
    LambdaSequence,
    QSequence,
    cp_pmf,
    fY_closed_form,
    geometric_limit,
    lambda_from_q,
    negbin_limit,
    q_from_lambda,
    stirling1_signed,
    stirling2,
)
from bpve.pgf import (
    OffspringLaw,
    Pmf,
    eval_pgf,
    factorial_moment,
    mean_product,
    phi_composite,
    shape_function,
    tail_compose,
)

__version__ = "0.1.0"

__all__ = [
    "A_coefficients",
    "B_closed_form",
    "check_conditions",
    "CompoundPoissonLaw",
    "conditional_law",
    "conditional_mean",
    "cp_pmf",
    "EnvironmentSpec",
    "eval_pgf",
    "EvolutionResult",
    "evolve_x",
    "evolve_x_many",
    "evolve_y",
    "evolve_y_many",
    "ExplicitFamily",
    "ExplicitImmigration",
    "factorial_moment",
    "FiniteSupport",
    "fY_closed_form",
    "geometric_limit",
    "immigration_at",
    "lambda_from_q",
    "LambdaSequence",
    "mean_product",
    "negbin_limit",
    "offspring_at",
    "OffspringLaw",
    "phi_composite",
    "Pmf",
    "PoissonMean",
    "q_from_lambda",
    "QSequence",
    "QuadraticFamily",
    "shape_function",
    "stirling1_signed",
    "stirling2",
    "tail_compose",
    "toeplitz_weight",
    "toeplitz_weights",
    "tv_distance",
]
