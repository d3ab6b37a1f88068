"""Regression and classification losses.

``*_grad`` functions return the derivative with respect to the prediction,
with the same shape as the prediction.
"""

import numpy as np

from ..errors import ShapeError

BCE_EPS = 1e-7


def _pair(y, yhat):
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise ShapeError(f"shape mismatch: {y.shape} vs {yhat.shape}")
    if y.size == 0:
        raise ValueError("empty input")
    return y, yhat


def mse(y, yhat):
    y, yhat = _pair(y, yhat)
    return float(np.mean((y - yhat) ** 2))


def mse_grad(y, yhat):
    y, yhat = _pair(y, yhat)
    return 2.0 * (yhat - y) / y.size


def rmse(y, yhat):
    return float(np.sqrt(mse(y, yhat)))


def mae(y, yhat):
    y, yhat = _pair(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def bce(y, yhat, eps=BCE_EPS):
    """Mean binary cross-entropy; predictions clamped to [eps, 1 - eps]."""
    y, yhat = _pair(y, yhat)
    p = np.clip(yhat, eps, 1.0 - eps)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def bce_grad(y, yhat, eps=BCE_EPS):
    y, yhat = _pair(y, yhat)
    p = np.clip(yhat, eps, 1.0 - eps)
    g = (p - y) / (p * (1.0 - p)) / y.size
    # clamped entries do not move the loss
    g[(yhat < eps) | (yhat > 1.0 - eps)] = 0.0
    return g
