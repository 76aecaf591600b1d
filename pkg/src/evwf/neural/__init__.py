"""Lip-reading regression networks written directly in numpy."""
from .lstm import DESK_HIDDEN, FULL_HIDDEN, LstmLayerParams, LstmNetwork, lstm_backward, lstm_cell_forward, lstm_forward
from .mlp import DenseParams, MlpNetwork, mlp_backward, mlp_forward
from .modelfile import load_model, save_model
from .optim import RmsPropState, TrainConfig, rmsprop_step
from .train import Regressor, Standardizer, TrainResult, loss_and_grads, mse_loss, train

__all__ = [
    "DESK_HIDDEN", "FULL_HIDDEN", "LstmLayerParams", "LstmNetwork", "lstm_backward",
    "lstm_cell_forward", "lstm_forward", "DenseParams", "MlpNetwork", "mlp_backward",
    "mlp_forward", "load_model", "save_model", "RmsPropState", "TrainConfig", "rmsprop_step",
    "Regressor", "Standardizer", "TrainResult", "loss_and_grads", "mse_loss", "train",
]
