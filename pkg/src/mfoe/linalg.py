"""Power iteration for the top eigenvalue of symmetric positive semidefinite maps."""

from dataclasses import dataclass

import numpy as np

from .errors import NumericFailure


@dataclass(frozen=True)
class PowerResult:
    value: float
    vector: np.ndarray
    iterations: int
    converged: bool


def power_iteration(apply, shape, tol=1e-6, max_iter=500, seed=0, x0=None):
    """Largest eigenvalue of the PSD linear map ``apply`` acting on arrays of ``shape``.

    Convergence is declared when two consecutive Rayleigh quotients differ by
    at most ``tol`` relative to the latest one.  The start vector is drawn
    from a seeded standard normal unless ``x0`` is given, so results are
    reproducible.
    """
    if x0 is None:
        x0 = np.random.default_rng(seed).standard_normal(shape)
    v = np.asarray(x0, dtype=np.float64)
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise ValueError("start vector must be nonzero")
    v = v / nrm
    prev = np.inf
    value = 0.0
    for it in range(1, max_iter + 1):
        w = apply(v)
        value = float(np.vdot(v, w))
        if not np.isfinite(value):
            raise NumericFailure("power iteration produced a non-finite value", it)
        wn = np.linalg.norm(w)
        if wn == 0:
            return PowerResult(0.0, v, it, True)
        if abs(value - prev) <= tol * abs(value):
            return PowerResult(value, v, it, True)
        prev = value
        v = w / wn
    return PowerResult(value, v, max_iter, False)


def matrix_spectral_norm(Q, tol=1e-8, max_iter=200):
    """Largest singular value of a small dense matrix, by power iteration on Q^T Q."""
    Q = np.asarray(Q, dtype=np.float64)
    if not np.any(Q):
        return 0.0
    res = power_iteration(lambda v: Q.T @ (Q @ v), (Q.shape[1],), tol=tol, max_iter=max_iter)
    return float(np.sqrt(max(res.value, 0.0)))
