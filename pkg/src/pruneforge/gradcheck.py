"""Central finite-difference gradients, the independent oracle for backprop."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


def finite_difference_gradients(
    fn: Callable[..., float],
    inputs: Sequence[np.ndarray],
    eps: float = 1e-6,
) -> list[np.ndarray]:
    """Gradient of a scalar function of several float64 arrays.

    Perturbs every element of every input by +/-eps and takes the centered
    quotient. Deliberately knows nothing about the autodiff graph.
    """
    grads = []
    for which, base in enumerate(inputs):
        if base.dtype != np.float64:
            raise ValueError("gradient checking runs in 64-bit mode only")
        g = np.zeros_like(base)
        flat = base.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = fn(*inputs)
            flat[i] = orig - eps
            f_minus = fn(*inputs)
            flat[i] = orig
            gflat[i] = (f_plus - f_minus) / (2 * eps)
        grads.append(g)
    return grads


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """max |a - n| / max(|a|, |n|, floor), elementwise."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))
