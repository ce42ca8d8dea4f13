"""noisecorr: training under class-conditional label noise.

Backward and forward loss corrections for cross-entropy, transition-matrix
estimation from noisy-model scores, a from-scratch ReLU MLP with manual
backpropagation, and an experiment harness with a CLI.
"""

from .datasets import (
    LabeledDataset,
    SyntheticGaussians,
    load_csv_dataset,
    load_idx,
    synthetic_gaussians,
)
from .estimator import (
    EstimatedT,
    EstimatorConfig,
    collect_scores,
    estimate_from_network,
    estimate_transition_matrix,
)
from .harness import (
    DatasetConfig,
    ExperimentConfig,
    ExperimentReport,
    NetworkConfig,
    OptimizerConfig,
    StageError,
    config_from_dict,
    load_config,
    run_experiment,
    sweep,
)
from .linalg import (
    SingularMatrixError,
    dense_matrix,
    dense_vector,
    log_sum_exp,
    matvec,
    softmax,
    solve_or_invert,
)
from .losses import CorrectedLoss, LossEval, expected_clean_loss_check, loss_vector
from .network import (
    MlpNetwork,
    backward,
    backward_batch,
    forward,
    forward_batch,
    hessian_probe,
    init_network,
    load_checkpoint,
    save_checkpoint,
)
from .noise import (
    NoiseMatrix,
    NoiseSpec,
    PairFlip,
    build_noise_matrix,
    corrupt_labels,
    invert_noise_matrix,
    row_normalize,
)
from .optim import AdaGrad, SgdMomentum
from .training import EpochStats, TrainConfig, TrainingDivergedError, accuracy, train

__version__ = "0.1.0"

__all__ = [
    "AdaGrad",
    "CorrectedLoss",
    "DatasetConfig",
    "EpochStats",
    "EstimatedT",
    "EstimatorConfig",
    "ExperimentConfig",
    "ExperimentReport",
    "LabeledDataset",
    "LossEval",
    "MlpNetwork",
    "NetworkConfig",
    "NoiseMatrix",
    "NoiseSpec",
    "OptimizerConfig",
    "PairFlip",
    "SgdMomentum",
    "SingularMatrixError",
    "StageError",
    "SyntheticGaussians",
    "TrainConfig",
    "TrainingDivergedError",
    "accuracy",
    "backward",
    "backward_batch",
    "build_noise_matrix",
    "collect_scores",
    "config_from_dict",
    "corrupt_labels",
    "dense_matrix",
    "dense_vector",
    "estimate_from_network",
    "estimate_transition_matrix",
    "expected_clean_loss_check",
    "forward",
    "forward_batch",
    "hessian_probe",
    "init_network",
    "invert_noise_matrix",
    "load_checkpoint",
    "load_config",
    "load_csv_dataset",
    "load_idx",
    "log_sum_exp",
    "loss_vector",
    "matvec",
    "row_normalize",
    "run_experiment",
    "save_checkpoint",
    "softmax",
    "solve_or_invert",
    "sweep",
    "synthetic_gaussians",
    "train",
]
