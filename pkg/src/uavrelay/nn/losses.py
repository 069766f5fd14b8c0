import numpy as np

from ..validation import check_positive, check_same_shape


def _weighted(per_elem, grad, weights):
    n = per_elem.size
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64).reshape(per_elem.shape[0], *([1] * (per_elem.ndim - 1)))
        per_elem = per_elem * w
        grad = grad * w
    return float(per_elem.sum() / n), grad / n


def huber_loss(pred, target, delta=1.0, weights=None):
    """Mean Huber loss and its gradient w.r.t. ``pred``.

    Per element: ``e**2 / 2`` when ``|e| <= delta`` else ``delta * (|e| - delta / 2)``.
    ``weights`` (one per sample along axis 0) scale the per-sample losses.
    """
    check_same_shape(pred, target, "pred", "target")
    check_positive(delta, "delta")
    e = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    small = np.abs(e) <= delta
    per_elem = np.where(small, 0.5 * e * e, delta * (np.abs(e) - 0.5 * delta))
    grad = np.where(small, e, delta * np.sign(e))
    return _weighted(per_elem, grad, weights)


def mse_loss(pred, target, weights=None):
    """Mean squared error and its gradient w.r.t. ``pred``."""
    check_same_shape(pred, target, "pred", "target")
    e = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return _weighted(e * e, 2.0 * e, weights)
