"""Chi-square goodness-of-fit testing for conditional distribution models.

The pipeline: transform responses through the fitted conditional CDF so they
are uniform exactly when the model is right, cross-classify them against a
partition of the covariate space, and calibrate chi-square statistics on the
resulting table. Data-dependent partitions (equal-count slicing and a
randomized recursive tree) keep cells balanced; a Monte Carlo engine checks
size and power of the whole procedure.
"""

from .backend import (
    HAS_NUMBA,
    active_backend,
    chisq_sf,
    erfc,
    locate_cells,
    normal_cdf,
    set_backend,
    std_normal_cdf,
)
from .errors import (
    CondgofError,
    ConvergenceFailureError,
    CovarianceConstructionError,
    DataError,
    DegenerateFitError,
    EmptyCellError,
    ExperimentInvalidError,
    InsufficientDataError,
    InvalidArgumentError,
    InvalidDfError,
    InvalidParameterError,
    InvalidStartError,
    ModelEvaluationError,
    SingularDesignError,
    SingularInformationError,
    UsageError,
)
from .estimate import (
    OptimizerConfig,
    fisher_information_estimate,
    min_chisq_estimate,
    mle_gaussian_linear,
    mle_numeric,
)
from .mc import (
    DgpSpec,
    PartitionRule,
    RepOutcome,
    SimConfig,
    SimResult,
    StatLevelResult,
    StatSummary,
    aggregate,
    calibrate_df,
    config_from_dict,
    config_to_dict,
    ks_uniform_distance,
    law_grid_partition,
    run_experiment,
    run_replication,
    simulate_dataset,
)
from .models import (
    ConditionalModel,
    Dataset,
    ExponentialRegressionModel,
    GaussianLinearModel,
    MODEL_FAMILIES,
    log_likelihood,
    resolve_model,
    rosenblatt,
)
from .partition import (
    Cell,
    Partition,
    RtpNode,
    RtpTree,
    cell_counts,
    gessaman_partition,
    locate_cell,
    marginal_grid_partition,
    partition_from_dict,
    partition_from_json,
    partition_to_dict,
    partition_to_json,
    rtp_partition,
)
from .stats import (
    DfConvention,
    DfPolicy,
    EstimatorKind,
    StatKind,
    TestReport,
    WaldInputs,
    has_zero_cells,
    lm_stat,
    lr_stat,
    neyman_stat,
    pearson_stat,
    run_test,
    wald_null_quadform,
    wald_raw_mle,
)
from .tabulate import (
    ContingencyTable,
    UGrid,
    balanced_grid,
    bin_v,
    cross_classify,
    require_positive_columns,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # backend
    "HAS_NUMBA",
    "active_backend",
    "set_backend",
    "erfc",
    "std_normal_cdf",
    "normal_cdf",
    "chisq_sf",
    "locate_cells",
    # errors
    "CondgofError",
    "InvalidArgumentError",
    "InvalidParameterError",
    "ModelEvaluationError",
    "InsufficientDataError",
    "EmptyCellError",
    "SingularDesignError",
    "DegenerateFitError",
    "SingularInformationError",
    "CovarianceConstructionError",
    "InvalidDfError",
    "InvalidStartError",
    "ConvergenceFailureError",
    "DataError",
    "UsageError",
    "ExperimentInvalidError",
    # models
    "Dataset",
    "ConditionalModel",
    "GaussianLinearModel",
    "ExponentialRegressionModel",
    "MODEL_FAMILIES",
    "resolve_model",
    "rosenblatt",
    "log_likelihood",
    # partition
    "Cell",
    "Partition",
    "RtpNode",
    "RtpTree",
    "cell_counts",
    "locate_cell",
    "gessaman_partition",
    "marginal_grid_partition",
    "rtp_partition",
    "partition_to_dict",
    "partition_from_dict",
    "partition_to_json",
    "partition_from_json",
    # tabulate
    "UGrid",
    "balanced_grid",
    "bin_v",
    "ContingencyTable",
    "cross_classify",
    "require_positive_columns",
    # stats
    "StatKind",
    "EstimatorKind",
    "DfConvention",
    "DfPolicy",
    "TestReport",
    "WaldInputs",
    "pearson_stat",
    "lr_stat",
    "lm_stat",
    "neyman_stat",
    "wald_null_quadform",
    "wald_raw_mle",
    "has_zero_cells",
    "run_test",
    # estimate
    "OptimizerConfig",
    "mle_gaussian_linear",
    "mle_numeric",
    "min_chisq_estimate",
    "fisher_information_estimate",
    # mc
    "DgpSpec",
    "PartitionRule",
    "SimConfig",
    "SimResult",
    "StatLevelResult",
    "StatSummary",
    "RepOutcome",
    "simulate_dataset",
    "law_grid_partition",
    "run_replication",
    "aggregate",
    "run_experiment",
    "calibrate_df",
    "ks_uniform_distance",
    "config_to_dict",
    "config_from_dict",
]
