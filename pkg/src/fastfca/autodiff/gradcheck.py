"""Finite-difference verification of analytic gradients."""
import numpy as np

from ..exceptions import NonFiniteError
from .tensor import backward, no_grad


def numeric_grad(fn, leaf, step=1e-5):
    """Central-difference gradient of the scalar ``fn()`` with respect to ``leaf``."""
    if step <= 0:
        raise ValueError("step must be positive")
    out = np.zeros_like(leaf.data)
    flat = leaf.data.reshape(-1)
    gflat = out.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = float(fn().data)
            flat[i] = orig - step
            down = float(fn().data)
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NonFiniteError("grad_check perturbation", f"element {i}")
            gflat[i] = (up - down) / (2.0 * step)
    return out


def grad_check(fn, leaf, step=1e-5):
    """Max relative error between analytic and central-difference gradients.

    ``fn`` rebuilds the loss from the current leaf values each time it is
    called.  The relative error of one element is
    ``|a - c| / max(|a|, |c|, 1e-8)``.
    """
    leaf.grad = None
    backward(fn())
    analytic = np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad.copy()
    leaf.grad = None
    central = numeric_grad(fn, leaf, step)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(central)), 1e-8)
    return float(np.max(np.abs(analytic - central) / denom))
