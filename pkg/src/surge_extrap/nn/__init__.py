"""Framework-free numerical core: dense and GRU layers, losses, Adam."""

from .layers import BiGRU, Dense, GRU, glorot_uniform, sigmoid
from .losses import bce, bce_grad, mae, mse, mse_grad, rmse
from .optim import Adam
from .gradcheck import numerical_grad, relative_error

__all__ = [
    "Adam",
    "BiGRU",
    "Dense",
    "GRU",
    "bce",
    "bce_grad",
    "glorot_uniform",
    "mae",
    "mse",
    "mse_grad",
    "numerical_grad",
    "relative_error",
    "rmse",
    "sigmoid",
]
