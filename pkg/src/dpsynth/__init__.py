"""Differentially private synthetic tabular data for mixed-type columns."""

__version__ = "0.1.0"

from .engine import EngineConfig, Phase, rappp_fit
from .evaluation import uniform_baseline, workload_error
from .privacy import PrivacyAccountant, eps_from_rho_delta, rho_from_eps_delta
from .projection import AnnealConfig, relaxed_projection_anneal
from .queries import (
    CategoricalMarginal,
    ClassCondLinearThreshold,
    MixedMarginal,
    PrefixMarginal,
    QuerySet,
    SigmoidParams,
    gen_cm_queries,
    gen_lt_queries,
    gen_mm_queries,
    gen_prefix_queries,
)
from .schema import (
    ColumnSpec,
    DiscreteDataset,
    RelaxedDataset,
    Schema,
    encode,
    project_to_feasible,
    sample_discrete,
)

__all__ = [
    "AnnealConfig",
    "CategoricalMarginal",
    "ClassCondLinearThreshold",
    "ColumnSpec",
    "DiscreteDataset",
    "EngineConfig",
    "MixedMarginal",
    "Phase",
    "PrefixMarginal",
    "PrivacyAccountant",
    "QuerySet",
    "RelaxedDataset",
    "Schema",
    "SigmoidParams",
    "encode",
    "eps_from_rho_delta",
    "gen_cm_queries",
    "gen_lt_queries",
    "gen_mm_queries",
    "gen_prefix_queries",
    "project_to_feasible",
    "rappp_fit",
    "relaxed_projection_anneal",
    "rho_from_eps_delta",
    "sample_discrete",
    "uniform_baseline",
    "workload_error",
]
