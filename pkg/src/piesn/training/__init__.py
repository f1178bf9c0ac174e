from .losses import (
    AdaptiveLossState,
    FrozenProblem,
    MinMaxScaler,
    adaptive_total_loss,
    data_loss,
    loss_and_grad,
    loss_gradient,
    physics_loss,
    physics_residual,
    ridge_fit,
    ridge_objective_grad,
    total_loss_fixed,
)
from .optim import Adam, Lbfgs, OptimResult, optimizer_minimize
from .pitrain import PiTrainConfig, TrainingData, TrainReport, TrainResult, pretrain, train_pi_esn

__all__ = [
    "AdaptiveLossState", "FrozenProblem", "MinMaxScaler", "adaptive_total_loss", "data_loss", "loss_and_grad",
    "loss_gradient", "physics_loss", "physics_residual", "ridge_fit", "ridge_objective_grad", "total_loss_fixed",
    "Adam", "Lbfgs", "OptimResult", "optimizer_minimize",
    "PiTrainConfig", "TrainingData", "TrainReport", "TrainResult", "pretrain", "train_pi_esn",
]
