"""
Euclidean projections onto l1 and l2 balls.

Both functions act on the last axis, so an array of shape ``(..., d)`` is a
batch of ``d``-dimensional vectors projected independently.
"""

import numpy as np

from .errors import DomainError


def _check(x, radius):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        raise DomainError("expected at least one axis, got a scalar")
    if not np.all(np.isfinite(x)):
        raise DomainError("projection input contains non-finite values")
    if not (np.isfinite(radius) and radius > 0):
        raise DomainError(f"radius must be positive and finite, got {radius!r}")
    return x


def l1_threshold(x, radius=1.0):
    """Soft-threshold level that maps each row of ``x`` onto the l1 sphere.

    Rows already inside the ball get a level of zero.  Uses the full-sort
    rule: with ``u`` the magnitudes sorted in decreasing order and ``c`` their
    cumulative sums, the level is ``(c[j] - radius) / (j + 1)`` for the largest
    ``j`` such that ``u[j]`` exceeds that value.
    """
    a = np.abs(x)
    d = a.shape[-1]
    u = -np.sort(-a, axis=-1)
    css = np.cumsum(u, axis=-1) - radius
    idx = np.arange(1, d + 1, dtype=np.float64)
    levels = css / idx
    # the active set is a prefix of the sorted magnitudes
    rho = np.sum(u > levels, axis=-1, keepdims=True)
    rho = np.maximum(rho, 1)
    theta = np.take_along_axis(levels, rho - 1, axis=-1)
    return np.maximum(theta, 0.0)


def project_l1_ball(x, radius=1.0):
    """Project onto ``{z : ||z||_1 <= radius}`` along the last axis.

    Vectors already inside the ball are returned unchanged (bit for bit).

    Parameters
    ----------
    x : array_like, shape (..., d)
    radius : float
        Ball radius, strictly positive.

    Returns
    -------
    numpy.ndarray
        Array of the same shape as ``x``.
    """
    x = _check(x, radius)
    a = np.abs(x)
    inside = np.sum(a, axis=-1, keepdims=True) <= radius
    if np.all(inside):
        return x.copy()
    theta = l1_threshold(x, radius)
    out = np.sign(x) * np.maximum(a - theta, 0.0)
    return np.where(inside, x, out)


def project_l2_ball(x, radius=1.0):
    """Project onto ``{z : ||z||_2 <= radius}`` along the last axis."""
    x = _check(x, radius)
    norm = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
    inside = norm <= radius
    scale = radius / np.where(inside, 1.0, norm)
    return np.where(inside, x, x * scale)


PROJECTIONS = {"linf": project_l1_ball, "l2": project_l2_ball}
