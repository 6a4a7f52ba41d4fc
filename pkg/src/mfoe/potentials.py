"""
Moreau envelopes of the l-inf and l2 norms and the multivariate expert potential.

The expert potential is a difference of two envelopes,

    psi(x) = mu * M_mu(x) - mu * M_{tau mu}(Q x),

where ``M_mu`` is the Moreau envelope of a norm with parameter ``mu``.  For
the l-inf norm the envelope gradient is the projection of ``x / mu`` onto the
unit l1 ball; for the l2 norm it is the projection onto the unit l2 ball.
All evaluations return the value and the gradient together since both come
out of the same projection.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError
from .linalg import matrix_spectral_norm
from .projections import PROJECTIONS

NORM_KINDS = ("linf", "l2")
MU_FLOOR = 1e-9
TAU_SLACK = 1e-6


def _finite(x):
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DomainError("envelope input contains non-finite values")
    return x


def _envelope(x, mu, kind):
    # mu is a scalar or an array broadcasting against x[..., :1]
    p = PROJECTIONS[kind](x / mu)
    r = x - mu * p
    if kind == "linf":
        outer = np.max(np.abs(r), axis=-1)
    else:
        outer = np.sqrt(np.sum(r * r, axis=-1))
    mu_v = mu[..., 0] if np.ndim(mu) else mu
    return outer + 0.5 * mu_v * np.sum(p * p, axis=-1), p


def moreau_linf(x, mu):
    """Moreau envelope of the l-inf norm and its gradient, along the last axis.

    >>> v, g = moreau_linf([1.0, 1.0], 0.1)
    >>> round(float(v), 12), g.tolist()
    (0.975, [0.5, 0.5])
    """
    x = _finite(x)
    if not mu > 0:
        raise DomainError(f"mu must be positive, got {mu!r}")
    return _envelope(x, mu, "linf")


def moreau_l2(x, mu):
    """Moreau envelope of the l2 norm (the Huber function of ``||x||_2``) and its gradient."""
    x = _finite(x)
    if not mu > 0:
        raise DomainError(f"mu must be positive, got {mu!r}")
    return _envelope(x, mu, "l2")


ENVELOPES = {"linf": moreau_linf, "l2": moreau_l2}


@dataclass(frozen=True, eq=False)
class PotentialGroup:
    """Parameters ``(Q, tau, mu)`` of one expert potential.

    Construction validates the sufficient conditions for a nonnegative
    potential with a unique minimum at the origin and a nonexpansive
    gradient; use :func:`enforce_group_constraints` to repair raw values.
    """

    Q: np.ndarray
    tau: float
    mu: float
    norm_kind: str = "linf"

    def __post_init__(self):
        Q = np.array(self.Q, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] < 1:
            raise ConfigurationError(f"Q must be a square matrix, got shape {Q.shape}")
        if not np.all(np.isfinite(Q)):
            raise ConfigurationError("Q contains non-finite entries")
        Q.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "mu", float(self.mu))
        check_group(Q, self.tau, self.mu, self.norm_kind)

    @property
    def d(self):
        return self.Q.shape[0]

    def with_mu(self, mu):
        return PotentialGroup(self.Q, self.tau, mu, self.norm_kind)

    def __call__(self, x):
        return psi_eval(self, x)


def check_group(Q, tau, mu, norm_kind):
    """Raise ConfigurationError unless ``(Q, tau, mu)`` satisfy the potential's invariants."""
    if norm_kind not in NORM_KINDS:
        raise ConfigurationError(f"norm_kind must be one of {NORM_KINDS}, got {norm_kind!r}")
    if not (np.isfinite(mu) and mu >= MU_FLOOR):
        raise ConfigurationError(f"mu must be >= {MU_FLOOR}, got {mu!r}")
    if not np.isfinite(tau):
        raise ConfigurationError(f"tau must be finite, got {tau!r}")
    q2 = np.linalg.norm(Q, 2) if Q.size else 0.0
    if norm_kind == "linf":
        rows = np.max(np.sum(np.abs(Q), axis=1))
        if rows > 1 + 1e-12:
            raise ConfigurationError(f"Q has induced inf-norm {rows:.6g} > 1")
        if not tau > q2 ** 2:
            raise ConfigurationError(f"tau={tau!r} must exceed ||Q||_2^2={q2 ** 2!r}")
    else:
        if q2 > 1 + 1e-7:
            raise ConfigurationError(f"Q has spectral norm {q2:.6g} > 1")
        if not tau > 1:
            raise ConfigurationError(f"tau={tau!r} must exceed 1")


def enforce_group_constraints(Q_raw, tau_raw, mu_raw, norm_kind="linf"):
    """Repair raw parameters into a valid :class:`PotentialGroup`.

    l-inf kind: rows of ``Q`` with absolute sum above one are divided by that
    sum, then ``tau`` is raised to at least ``||Q||_2^2 + 1e-6``.
    l2 kind: ``Q`` is divided by ``max(1, ||Q||_2)`` and ``tau`` raised to at
    least ``1 + 1e-6``.  In both cases ``mu`` is floored at ``1e-9``.
    """
    if norm_kind not in NORM_KINDS:
        raise ConfigurationError(f"norm_kind must be one of {NORM_KINDS}, got {norm_kind!r}")
    Q = np.array(Q_raw, dtype=np.float64)
    if norm_kind == "linf":
        s = np.sum(np.abs(Q), axis=1, keepdims=True)
        Q = np.where(s > 1, Q / np.where(s > 1, s, 1.0), Q)
        tau = max(float(tau_raw), matrix_spectral_norm(Q) ** 2 + TAU_SLACK)
    else:
        Q = Q / max(1.0, matrix_spectral_norm(Q))
        tau = max(float(tau_raw), 1.0 + TAU_SLACK)
    mu = max(float(mu_raw), MU_FLOOR)
    return PotentialGroup(Q, tau, mu, norm_kind)


def psi_batch(Q, tau, mu, X, norm_kind="linf"):
    """Evaluate K expert potentials on batches of vectors.

    Parameters
    ----------
    Q : array, shape (K, d, d)
    tau, mu : array, shape (K,)
    X : array, shape (K, n, d)
        ``X[k]`` holds the ``n`` vectors fed to potential ``k``.

    Returns
    -------
    values : array, shape (K, n)
    grads : array, shape (K, n, d)
    """
    mu = np.asarray(mu, dtype=np.float64).reshape(-1, 1, 1)
    tau = np.asarray(tau, dtype=np.float64).reshape(-1, 1, 1)
    QX = np.einsum("kij,knj->kni", Q, X)
    v1, p1 = _envelope(X, mu, norm_kind)
    v2, p2 = _envelope(QX, tau * mu, norm_kind)
    m = mu[..., 0]
    values = m * (v1 - v2)
    grads = mu * (p1 - np.einsum("kji,knj->kni", Q, p2))
    return values, grads


def psi_eval(group, x):
    """Value and gradient of one expert potential at ``x`` (shape ``(..., d)``)."""
    x = _finite(x)
    if x.shape[-1] != group.d:
        raise DomainError(f"expected vectors of length {group.d}, got {x.shape[-1]}")
    lead = x.shape[:-1]
    X = x.reshape(1, -1, group.d)
    v, g = psi_batch(group.Q[None], [group.tau], [group.mu], X, group.norm_kind)
    return v.reshape(lead), g.reshape(x.shape)


def theorem_lower_bound(group, x):
    """Lower bound ``mu^2/2 (1 - ||Q||_2^2 / tau) ||Proj(x / mu)||^2`` on the potential."""
    x = np.asarray(x, dtype=np.float64)
    p = PROJECTIONS[group.norm_kind](x / group.mu)
    q2 = np.linalg.norm(group.Q, 2) ** 2
    return 0.5 * group.mu ** 2 * (1 - q2 / group.tau) * np.sum(p * p, axis=-1)


def wcrr_univariate(t, mu, nu, lam):
    """Univariate bump potential ``lam * (M_mu(t) - M_nu(t))`` with Huber envelopes of ``|t|``.

    Returns the value and the derivative.  Requires ``nu > mu``.
    """
    if not (0 < mu < nu and lam > 0):
        raise DomainError("wcrr_univariate needs 0 < mu < nu and lam > 0")
    t = _finite(t)
    a = np.abs(t)

    def huber(s):
        return np.where(a <= s, t * t / (2 * s), a - s / 2)

    value = lam * (huber(mu) - huber(nu))
    deriv = lam * (np.clip(t / mu, -1, 1) - np.clip(t / nu, -1, 1))
    return value, deriv
