"""Central finite-difference gradients used as independent oracles."""

import numpy as np


def central_difference(fn, x, step=1e-6, relative_step=True):
    """Componentwise central differences of a scalar function.

    With relative_step the per-coordinate step is step * (1 + |x_i|).
    """
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        h = step * (1.0 + abs(x[i])) if relative_step else step
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (fn(xp) - fn(xm)) / (2.0 * h)
    return grad


def rel_error(approx, exact):
    """||approx - exact|| / (1 + ||exact||)."""
    approx = np.asarray(approx, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    return float(np.linalg.norm(approx - exact) / (1.0 + np.linalg.norm(exact)))
