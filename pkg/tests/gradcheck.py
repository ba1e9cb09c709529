"""Central-difference gradient checking shared by the test modules."""

import numpy as np


def numeric_grad(f, arr, step=1e-5):
    """d f() / d arr by central differences; ``arr`` is perturbed in place."""
    g = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        orig = arr[idx]
        arr[idx] = orig + step
        up = f()
        arr[idx] = orig - step
        down = f()
        arr[idx] = orig
        g[idx] = (up - down) / (2 * step)
    return g


def rel_error(a, b, floor=1e-6):
    """Max elementwise relative error, with a floor on the denominator so
    near-zero entries are compared absolutely."""
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))
