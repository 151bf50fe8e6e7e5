"""Preference-based optimization with an interpretable tree surrogate."""

from .acquisition import AcquisitionConfig, PairPrediction, predict, qeubo_value, select_next_pair
from .domain import (
    Categorical,
    ComparisonPair,
    Continuous,
    FeatureSchema,
    FeatureSpec,
    Instance,
    PreferenceDataset,
    lhs_sample_pairs,
    validate_instance,
)
from .loop import Oracle, RunConfig, SessionTrace, SyntheticOracle, recommend, run
from .posterior import (
    LatentPosterior,
    LeafPairIndex,
    NoiseConfig,
    condition_sum_to_zero,
    find_map,
    fit_surrogate,
    laplace_posterior,
    objective_with_derivatives,
)
from .tree import (
    CategoryEquals,
    SplitTest,
    Threshold,
    TreeConfig,
    best_split,
    consistency_score,
    export_explanation,
    grow_tree,
    partition_pairs,
    route,
)

__version__ = "0.1.0"
