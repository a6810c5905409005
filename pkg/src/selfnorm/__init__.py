"""Simulation laboratory for self-normalized sums of locally dependent
random fields.

The package builds dependence structures (lattice balls, dependency
graphs), samples mean-zero fields over them with counter-based streams,
computes the self-normalized statistic and its censored companions, and
checks the moment components and normal-approximation bounds that control
them, with every Monte Carlo estimate carrying explicit error bands.
"""

from .bounds import (
    BoundComponents,
    ConcentrationCurve,
    InequalityReport,
    compute_components,
    concentration_diagnostic,
    lemma_oracle_41,
    lemma_oracle_42,
    lemma_oracle_43,
    remark_inequalities,
    theorem1_rhs,
    theorem2_rhs,
    theorem3_rhs,
)
from .dependence import (
    DependenceStructure,
    NeighborhoodStats,
    build_graph_structure,
    build_lattice_structure,
    cycle_edges,
    matching_edges,
    n_of_a,
    n_of_b,
    neighborhood_stats,
    path_edges,
    read_edge_list,
)
from .errors import (
    DegenerateModelError,
    EnumerationTooLargeError,
    NoiseDominatedError,
    UnsupportedMomentError,
)
from .models import (
    FieldModel,
    InnovationSpec,
    edge_sum_model,
    exact_abs_moment,
    exact_pair_moment,
    exact_sigma2,
    exact_tail_moment,
    exact_tail_probability,
    iid_model,
    moving_average_model,
    sample_field,
)
from .montecarlo import (
    EmpiricalDistribution,
    ExperimentRecord,
    RateFitResult,
    dkw_band,
    exact_distribution_small,
    ks_distance_vs_normal,
    rate_fit,
    run_experiment,
    truncation_gap_check,
)
from .numerics import (
    LineFit,
    SummationAccumulator,
    normal_cdf,
    normal_quantile,
    ols_fit,
    pairwise_sum,
)
from .statistics import (
    SampleStatistics,
    TruncatedSystem,
    compute_statistics,
    compute_truncated,
    neighborhood_sum,
    psi,
    sigma_bar2,
)

__version__ = "0.1.0"

__all__ = [
    "BoundComponents",
    "ConcentrationCurve",
    "DegenerateModelError",
    "DependenceStructure",
    "EmpiricalDistribution",
    "EnumerationTooLargeError",
    "ExperimentRecord",
    "FieldModel",
    "InequalityReport",
    "InnovationSpec",
    "LineFit",
    "NeighborhoodStats",
    "NoiseDominatedError",
    "RateFitResult",
    "SampleStatistics",
    "SummationAccumulator",
    "TruncatedSystem",
    "UnsupportedMomentError",
    "build_graph_structure",
    "build_lattice_structure",
    "compute_components",
    "compute_statistics",
    "compute_truncated",
    "concentration_diagnostic",
    "cycle_edges",
    "dkw_band",
    "edge_sum_model",
    "exact_abs_moment",
    "exact_distribution_small",
    "exact_pair_moment",
    "exact_sigma2",
    "exact_tail_moment",
    "exact_tail_probability",
    "iid_model",
    "ks_distance_vs_normal",
    "lemma_oracle_41",
    "lemma_oracle_42",
    "lemma_oracle_43",
    "matching_edges",
    "moving_average_model",
    "n_of_a",
    "n_of_b",
    "neighborhood_stats",
    "neighborhood_sum",
    "normal_cdf",
    "normal_quantile",
    "ols_fit",
    "pairwise_sum",
    "path_edges",
    "psi",
    "rate_fit",
    "read_edge_list",
    "remark_inequalities",
    "run_experiment",
    "sample_field",
    "sigma_bar2",
    "theorem1_rhs",
    "theorem2_rhs",
    "theorem3_rhs",
    "truncation_gap_check",
]
