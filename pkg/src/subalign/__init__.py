"""Kernel-discrepancy estimators and subdomain-adaptation training tools."""

from .data import Dataset, gen_blobs, gen_two_moons, load_csv, save_csv
from .discrepancy import (
    ClassWeights,
    DiscrepancyResult,
    class_weights,
    lmmd,
    lmmd_finite_diff,
    mmd,
)
from .errors import (
    ConfigurationError,
    DegenerateBatchError,
    EmptyOverlapError,
    ParseError,
    SubalignError,
    ValidationError,
)
from .kernels import (
    DEFAULT_MULTIPLIERS,
    MEDIAN,
    KernelSpec,
    gaussian_kernel_matrix,
    median_bandwidth,
    pairwise_sq_dists,
    resolve_bandwidth,
)
from .metrics import (
    ADistanceReport,
    a_distance_from_error,
    accuracy,
    local_a_distance,
    measure_discrepancies,
    proxy_a_distance,
)
from .network import (
    ForwardTrace,
    MlpModel,
    backward,
    cross_entropy,
    forward,
    load_model,
    mlp_init,
    parameter_count,
    save_model,
)
from .trainer import (
    LabeledBatch,
    TrainConfig,
    TrainRecord,
    TrainState,
    TrainTrace,
    init_state,
    lambda_schedule,
    lr_schedule,
    train,
    train_step,
)

__version__ = "0.1.0"
