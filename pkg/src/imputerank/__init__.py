"""imputerank: quantitative evaluation and ranking of missing-value
imputation algorithms on categorical datasets.

The pipeline learns a reference conditional model from fully observed rows,
scores each imputer's samples against reference samples with five
distribution-comparison metrics, and aggregates per-row ranks with Friedman
and Nemenyi significance tests.
"""

__version__ = "0.1.0"

from .data import (
    ColumnSpec,
    Dataset,
    GroundTruth,
    MissingPattern,
    PatternCatalog,
    SyntheticSpec,
    extract_patterns,
    generate_synthetic,
    inject_mcar,
    load_csv,
    split_rows,
    write_csv,
)
from .imputers import (
    Imputer,
    KnnImputer,
    MiceImputer,
    MixtureImputer,
    ModeMeanImputer,
    TrueSamplerImputer,
)
from .metrics import (
    KernelConfig,
    KlSolverConfig,
    MetricScore,
    NdsConfig,
    SampleSet,
    b_test,
    compute_score,
    gaussian_kernel,
    kl_divergence,
    mmd_score,
    nds,
    symmetric_kl,
)
from .mrf import (
    GibbsConfig,
    MrfParams,
    TrainConfig,
    conditional_distribution,
    gibbs_sample,
    train_per_pattern,
    train_single_model,
)
from .ranking import (
    RankMatrix,
    RankingResult,
    aggregate,
    friedman_test,
    inconsistency_score,
    kendall_tau_distance,
    nemenyi_cd,
    scores_to_ranks,
)
