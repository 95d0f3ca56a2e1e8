"""Cross-modal feature normalization by constrained ridge projection.

The layer expresses one modality's features as a regularized linear
function of another's and emits the residual, with the regularization
strength re-estimated every batch so the projection weights keep unit
Frobenius norm. Ships with a synthetic confounded-image benchmark that
has an analytically known accuracy ceiling.
"""

from .batchnorm import BatchNorm
from .harness import ExperimentSpec, RunResult, ablation_batchsize, ablation_lambda, run_matrix
from .lambda_solver import (
    LambdaHistory,
    LambdaObjective,
    LambdaSolution,
    LbfgsConfig,
    objective_gradient,
    objective_norm,
    solve_lambda,
)
from .layer import BatchInfo, RegBN, RegBNConfig, RegBNState, SmallBatchWarning
from .linalg import SvdFactors, frobenius_norm, matmul, mean_abs_diff, thin_svd
from .mlp import MlpModel, TrainConfig, evaluate, forward, train, train_epoch
from .projection import project_direct, project_svd, residual
from .synthetic import SynthParams, SynthSplit, bayes_reference, generate

__version__ = "0.1.0"

__all__ = [
    "BatchInfo",
    "BatchNorm",
    "ExperimentSpec",
    "LambdaHistory",
    "LambdaObjective",
    "LambdaSolution",
    "LbfgsConfig",
    "MlpModel",
    "RegBN",
    "RegBNConfig",
    "RegBNState",
    "RunResult",
    "SmallBatchWarning",
    "SvdFactors",
    "SynthParams",
    "SynthSplit",
    "TrainConfig",
    "ablation_batchsize",
    "ablation_lambda",
    "bayes_reference",
    "evaluate",
    "forward",
    "frobenius_norm",
    "generate",
    "matmul",
    "mean_abs_diff",
    "objective_gradient",
    "objective_norm",
    "project_direct",
    "project_svd",
    "residual",
    "run_matrix",
    "solve_lambda",
    "thin_svd",
    "train",
    "train_epoch",
]
