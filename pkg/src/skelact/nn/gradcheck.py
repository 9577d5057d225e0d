"""Central finite-difference gradient checking."""

from __future__ import annotations

import numpy as np


def numerical_grad(f, x, eps=1e-6, indices=None):
    """Central differences of scalar ``f()`` w.r.t. array ``x`` (perturbed in place).

    If ``indices`` is given, only those flat positions are probed and a 1-d
    array of partial derivatives is returned; otherwise the full gradient.
    """
    flat = x.reshape(-1)
    probe = range(flat.size) if indices is None else indices
    out = []
    for i in probe:
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        out.append((fp - fm) / (2 * eps))
    out = np.array(out, dtype=np.float64)
    return out.reshape(x.shape) if indices is None else out


def rel_error(analytic, numeric):
    """||a - n|| / max(||a||, ||n||), 0 when both vanish."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(n))
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(a - n) / denom)
