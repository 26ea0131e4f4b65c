"""CO2-aware dynamic tariff scheduling with chunked QUBO decomposition."""
from .baselines import run_monolithic
from .datagen import GeneratorConfig, generate_instance
from .decomposition import partition_customers, run_decomposition
from .encoding import build_encoding
from .errors import DSPError
from .metrics import full_report
from .model import (
    DiscountMatrix,
    DiscountScheme,
    Instance,
    PenaltyWeights,
    check_constraints,
    cost,
    emissions,
    normalizations,
)
from .postprocess import PostProcessConfig, post_process
from .relaxation import solve_global
from .solvers import SolverBudget, solve_exhaustive, solve_sa

__all__ = [
    "DSPError",
    "DiscountMatrix",
    "DiscountScheme",
    "GeneratorConfig",
    "Instance",
    "PenaltyWeights",
    "PostProcessConfig",
    "SolverBudget",
    "build_encoding",
    "check_constraints",
    "cost",
    "emissions",
    "full_report",
    "generate_instance",
    "normalizations",
    "partition_customers",
    "post_process",
    "run_decomposition",
    "run_monolithic",
    "solve_exhaustive",
    "solve_global",
    "solve_sa",
]
