"""Shared numerical test helpers: finite differences and relative error."""

import numpy as np


def rel_err(a: float, b: float, floor: float = 1e-12) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def central_diff(fn, x: np.ndarray, step: float) -> np.ndarray:
    """Central finite differences of a scalar function over every entry of x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros(x.shape)
    for pos in np.ndindex(x.shape):
        up = x.copy()
        dn = x.copy()
        up[pos] += step
        dn[pos] -= step
        grad[pos] = (fn(up) - fn(dn)) / (2.0 * step)
    return grad


def max_rel_err(analytic: np.ndarray, fd: np.ndarray, floor: float = 1e-12) -> float:
    """Worst entrywise relative error between two gradient arrays."""
    analytic = np.asarray(analytic, dtype=np.float64)
    fd = np.asarray(fd, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), floor)
    return float((np.abs(analytic - fd) / denom).max())
