import numpy as np


def numerical_grad(f, x, step=1e-5):
    """Central-difference gradient of scalar ``f()`` w.r.t. array ``x``.

    ``x`` is perturbed in place and restored after each probe.
    """
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + step
        fp = f()
        x[idx] = orig - step
        fm = f()
        x[idx] = orig
        grad[idx] = (fp - fm) / (2.0 * step)
    return grad


def relative_error(analytic, numeric, floor=1e-7):
    """Largest entrywise relative error, treating |diff| <= floor as exact."""
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    rel = np.where(diff <= floor, 0.0, diff / np.maximum(scale, floor))
    return float(rel.max()) if rel.size else 0.0
