"""Shared numeric oracles for the test suite.

The finite-difference gradient here is the independent check for every
analytic gradient in the package; it must never call into the tape.
"""

from __future__ import annotations

import numpy as np


def numeric_grad(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central finite differences of scalar-valued f with respect to x.

    f takes no arguments and must reread x (mutated in place) on each call.
    """
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    # floor keeps finite-difference noise from dominating genuinely zero grads
    denom = max(np.max(np.abs(numeric)), np.max(np.abs(analytic)), 1e-6)
    return float(np.max(np.abs(analytic - numeric)) / denom)
