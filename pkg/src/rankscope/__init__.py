"""Rank certification for partially observed matrices and tensors.

The package decides, from the observation pattern alone, whether a
candidate rank can be certified as an upper bound on the rank of every
completion, and bundles the samplers, constraint builders, probability
thresholds, and completion experiments that feed that decision.
Figure rendering lives in :mod:`rankscope.figures`, imported lazily so
the core library stays free of plotting dependencies at import time.
"""

from .certify import (
    CLAIM_EXACT,
    CLAIM_NONE,
    CLAIM_UPPER,
    DEFAULT_BUDGET,
    BSearchResult,
    Certificate,
    MaxRankResult,
    SMembership,
    TTHatResult,
    brute_force_B_oracle,
    certify_bound,
    check_assumption_A,
    check_assumption_B,
    g_capacity,
    in_S_omega,
    max_scalar_rank,
    required_b_size,
    sparsity_margin,
    tt_hat_membership,
)
from .completion import (
    CompletionResult,
    GapResult,
    GapRun,
    GroundTruth,
    SolverParams,
    estimate_rank_pipeline,
    gap_experiment,
    numerical_rank,
    random_cp_tensor,
    random_low_rank_matrix,
    random_tt_tensor,
    random_tucker_tensor,
    svt_complete,
    tt_rank_from_array,
    tucker_rank_from_array,
)
from .constraints import (
    AnchorSet,
    AssumptionError,
    ConstraintStructure,
    anchor_condition_holds,
    build_constraint_matrix,
    build_constraint_matrix_multiview,
    build_constraint_tensor_cp,
    build_constraint_tensor_tt,
    build_constraint_tensor_tucker,
    select_tucker_anchor_set,
    write_anchor_set,
    write_constraint,
)
from .patterns import (
    ObservedData,
    PatternFormatError,
    SamplingPattern,
    array_from_observed,
    bernoulli_pattern,
    coords_by_slice,
    derive_seed,
    matricize_array,
    observed_from_array,
    per_column_pattern,
    read_pattern,
    read_values,
    slice_counts,
    unfold_array,
    write_pattern,
    write_values,
)
from .ranks import (
    RankSpec,
    tt_rank_is_valid,
    valid_multiview_ranks,
    valid_tt_ranks,
    valid_tucker_ranks,
)
from .thresholds import (
    HeatmapTable,
    MinEpsilonResult,
    ThresholdReport,
    heatmap_single,
    min_epsilon_single,
    required_prob_cp,
    required_prob_multiview,
    required_prob_single,
    required_prob_tt,
    required_prob_tucker,
    success_floor,
)

__version__ = "0.1.0"

__all__ = [
    "AnchorSet",
    "AssumptionError",
    "BSearchResult",
    "CLAIM_EXACT",
    "CLAIM_NONE",
    "CLAIM_UPPER",
    "Certificate",
    "CompletionResult",
    "ConstraintStructure",
    "DEFAULT_BUDGET",
    "GapResult",
    "GapRun",
    "GroundTruth",
    "HeatmapTable",
    "MaxRankResult",
    "MinEpsilonResult",
    "ObservedData",
    "PatternFormatError",
    "RankSpec",
    "SMembership",
    "SamplingPattern",
    "SolverParams",
    "TTHatResult",
    "ThresholdReport",
    "anchor_condition_holds",
    "array_from_observed",
    "bernoulli_pattern",
    "brute_force_B_oracle",
    "build_constraint_matrix",
    "build_constraint_matrix_multiview",
    "build_constraint_tensor_cp",
    "build_constraint_tensor_tt",
    "build_constraint_tensor_tucker",
    "certify_bound",
    "check_assumption_A",
    "check_assumption_B",
    "coords_by_slice",
    "derive_seed",
    "estimate_rank_pipeline",
    "g_capacity",
    "gap_experiment",
    "heatmap_single",
    "in_S_omega",
    "matricize_array",
    "max_scalar_rank",
    "min_epsilon_single",
    "numerical_rank",
    "observed_from_array",
    "per_column_pattern",
    "random_cp_tensor",
    "random_low_rank_matrix",
    "random_tt_tensor",
    "random_tucker_tensor",
    "read_pattern",
    "read_values",
    "required_b_size",
    "required_prob_cp",
    "required_prob_multiview",
    "required_prob_single",
    "required_prob_tt",
    "required_prob_tucker",
    "select_tucker_anchor_set",
    "slice_counts",
    "sparsity_margin",
    "success_floor",
    "svt_complete",
    "tt_hat_membership",
    "tt_rank_from_array",
    "tt_rank_is_valid",
    "tucker_rank_from_array",
    "unfold_array",
    "valid_multiview_ranks",
    "valid_tt_ranks",
    "valid_tucker_ranks",
    "write_anchor_set",
    "write_constraint",
    "write_pattern",
    "write_values",
]
