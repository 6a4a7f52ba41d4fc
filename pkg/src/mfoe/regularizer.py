"""
The multivariate fields-of-experts regularizer and its weight file format.

``R(x) = sum_k sum_pixels psi_k(W_k x)`` where ``W_k x`` stacks ``d``
consecutive channels of the filter bank output, so every pixel yields one
``d``-dimensional vector per group.  The gradient is ``W^T phi(W x)`` with
``phi`` the concatenated potential gradients.

Only the ``mu_k`` depend on the noise level; they are read from a table
keyed by sigma and linearly interpolated.
"""

import base64
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError, ParseError
from .filterbank import FilterBank
from .potentials import MU_FLOOR, NORM_KINDS, PotentialGroup, check_group, \
    enforce_group_constraints, psi_batch

SCHEMA_VERSION = 1
DEFAULT_SIGMA_KNOTS = (0.0, 0.05, 0.1, 0.15, 0.2)


def default_mu_table(K, knots=DEFAULT_SIGMA_KNOTS):
    """``mu_k(sigma) = sigma / 100 + 1e-9`` sampled at ``knots``."""
    knots = np.asarray(knots, dtype=np.float64)
    return knots, np.repeat(knots[:, None] / 100 + MU_FLOOR, K, axis=1)


class MfoeModel:
    """Filter bank, K expert potentials, noise-dependent ``mu`` table, default strength.

    Parameters
    ----------
    filterbank : FilterBank
        Must have ``K * d`` output channels.
    Q : array, shape (K, d, d)
    tau : array, shape (K,)
    mu_sigmas : array, shape (J,)
        Strictly increasing noise levels.
    mu_values : array, shape (J, K)
    norm_kind : {"linf", "l2"}
    lambda_default : float
    repair : bool
        Repair invalid groups with :func:`enforce_group_constraints` instead
        of raising.
    """

    def __init__(self, filterbank, Q, tau, mu_sigmas, mu_values, norm_kind="linf",
                 lambda_default=1.0, repair=False):
        Q = np.array(Q, dtype=np.float64)
        tau = np.array(tau, dtype=np.float64).reshape(-1)
        if Q.ndim != 3 or Q.shape[1] != Q.shape[2]:
            raise ConfigurationError(f"Q must have shape (K, d, d), got {Q.shape}")
        K, d, _ = Q.shape
        if tau.shape != (K,):
            raise ConfigurationError(f"tau must have shape ({K},), got {tau.shape}")
        if filterbank.n_out != K * d:
            raise ConfigurationError(
                f"filter bank has {filterbank.n_out} outputs, expected K*d = {K * d}")
        if norm_kind not in NORM_KINDS:
            raise ConfigurationError(f"norm_kind must be one of {NORM_KINDS}, got {norm_kind!r}")
        sig = np.array(mu_sigmas, dtype=np.float64).reshape(-1)
        mus = np.array(mu_values, dtype=np.float64).reshape(len(sig), -1)
        if len(sig) == 0 or mus.shape[1] != K:
            raise ConfigurationError(f"mu_table must hold at least one row of {K} values")
        if np.any(np.diff(sig) <= 0) or not np.all(np.isfinite(sig)):
            raise ConfigurationError("mu_table sigmas must be finite and strictly increasing")
        if repair:
            mus = np.maximum(mus, MU_FLOOR)
            groups = [enforce_group_constraints(Q[k], tau[k], 1.0, norm_kind) for k in range(K)]
            Q = np.stack([g.Q for g in groups])
            tau = np.array([g.tau for g in groups])
        elif not np.all(mus >= MU_FLOOR):
            raise ConfigurationError(f"every mu_table entry must be >= {MU_FLOOR}")
        else:
            for k in range(K):
                try:
                    check_group(Q[k], tau[k], 1.0, norm_kind)
                except ConfigurationError as err:
                    raise ConfigurationError(f"group {k}: {err}") from None
        if not (np.isfinite(lambda_default) and lambda_default > 0):
            raise ConfigurationError(f"lambda_default must be positive, got {lambda_default!r}")
        for a in (Q, tau, sig, mus):
            a.setflags(write=False)
        self.filterbank = filterbank
        self.Q = Q
        self.tau = tau
        self.mu_sigmas = sig
        self.mu_values = mus
        self.norm_kind = norm_kind
        self.lambda_default = float(lambda_default)

    @property
    def K(self):
        return self.Q.shape[0]

    @property
    def d(self):
        return self.Q.shape[1]

    def __repr__(self):
        return (f"MfoeModel(K={self.K}, d={self.d}, norm_kind={self.norm_kind!r}, "
                f"filter_size={self.filterbank.filter_size}, lambda={self.lambda_default:.4g})")

    # construction helpers

    @classmethod
    def default(cls, K=15, d=4, norm_kind="linf", seed=0, lambda_default=1.0, **fb_kwargs):
        """Untrained model: random zero-mean normalized bank, small random ``Q``."""
        fb = FilterBank.random(n_out=K * d, seed=seed, **fb_kwargs)
        rng = np.random.default_rng(seed + 1)
        Q = 0.5 * np.eye(d) + 0.1 * rng.standard_normal((K, d, d))
        sig, mus = default_mu_table(K)
        return cls(fb, Q, np.full(K, 2.0), sig, mus, norm_kind, lambda_default, repair=True)

    @classmethod
    def huber_tv(cls, mu=1e-3, lambda_default=1.0):
        """Smoothed isotropic TV: two finite-difference filters, ``Q = 0``, l2 potential.

        The filters are scaled by ``1 / (2 sqrt 2)``, the bound on the norm of
        the zero-padded discrete gradient, so ``R(x) / mu`` approaches
        ``TV(x) / (2 sqrt 2)`` as ``mu`` goes to zero.
        """
        k = np.zeros((2, 3, 3))
        k[0, 1, 1], k[0, 1, 2] = -1.0, 1.0
        k[1, 1, 1], k[1, 2, 1] = -1.0, 1.0
        fb = FilterBank.from_filters(k, spectral_scale=1 / (2 * np.sqrt(2)))
        return cls(fb, np.zeros((1, 2, 2)), [2.0], [0.0], [[mu]], "l2", lambda_default)

    def replace(self, **changes):
        fields = dict(filterbank=self.filterbank, Q=self.Q, tau=self.tau,
                      mu_sigmas=self.mu_sigmas, mu_values=self.mu_values,
                      norm_kind=self.norm_kind, lambda_default=self.lambda_default)
        fields.update(changes)
        return MfoeModel(**fields)

    # evaluation

    def mu_for_sigma(self, sigma):
        """Per-group ``mu`` at noise level ``sigma``, interpolated and clamped to the table."""
        sigma = float(sigma)
        if not np.isfinite(sigma):
            raise DomainError(f"sigma must be finite, got {sigma!r}")
        mu = np.array([np.interp(sigma, self.mu_sigmas, self.mu_values[:, k])
                       for k in range(self.K)])
        return np.maximum(mu, MU_FLOOR)

    def groups(self, sigma):
        mu = self.mu_for_sigma(sigma)
        return [PotentialGroup(self.Q[k], self.tau[k], mu[k], self.norm_kind)
                for k in range(self.K)]

    def value_grad(self, x, sigma, groups=None):
        """``R_sigma(x)`` and its gradient, from one filtering pass and one projection pass.

        ``groups`` optionally restricts the sum to a subset of group indices.
        """
        x = np.asarray(x, dtype=np.float64)
        fb = self.filterbank
        c = fb.apply(x)
        K, d = self.K, self.d
        H, W = x.shape
        X = c.reshape(K, d, H * W).transpose(0, 2, 1)
        mu = self.mu_for_sigma(sigma)
        idx = np.arange(K) if groups is None else np.asarray(sorted(groups), dtype=int)
        vals, grads = psi_batch(self.Q[idx], self.tau[idx], mu[idx], X[idx], self.norm_kind)
        phi = np.zeros_like(X)
        phi[idx] = grads
        value = float(sum(np.sum(v) for v in vals))
        return value, fb.adjoint(phi.transpose(0, 2, 1).reshape(K * d, H, W))

    def value(self, x, sigma):
        return self.value_grad(x, sigma)[0]

    def grad(self, x, sigma):
        return self.value_grad(x, sigma)[1]

    # serialization

    def to_dict(self):
        stages = [{"shape": list(k.shape), "data": _b64(k)} for k in self.filterbank.stages]
        return {
            "version": SCHEMA_VERSION,
            "K": self.K,
            "d": self.d,
            "norm_kind": self.norm_kind,
            "stages": stages,
            "spectral_scale": self.filterbank.spectral_scale,
            "groups": [{"Q": self.Q[k].reshape(-1).tolist(), "tau": float(self.tau[k])}
                       for k in range(self.K)],
            "mu_table": [{"sigma": float(s), "mu": self.mu_values[j].tolist()}
                         for j, s in enumerate(self.mu_sigmas)],
            "lambda_default": self.lambda_default,
        }

    @classmethod
    def from_dict(cls, doc, repair=False):
        return _model_from_doc(doc, repair)

    def digest(self):
        """SHA-256 of the canonical JSON serialization."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _b64(a):
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _field(doc, key, kind, where="model"):
    if not isinstance(doc, dict) or key not in doc:
        raise ParseError(f"{where}: missing field {key!r}")
    val = doc[key]
    ok = {
        "int": isinstance(val, int) and not isinstance(val, bool),
        "num": isinstance(val, (int, float)) and not isinstance(val, bool),
        "str": isinstance(val, str),
        "list": isinstance(val, list),
    }[kind]
    if not ok:
        raise ParseError(f"{where}: field {key!r} has the wrong type ({type(val).__name__})")
    return val


def _floats(val, n, where):
    if not isinstance(val, list) or len(val) != n or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in val):
        raise ParseError(f"{where}: expected a list of {n} numbers")
    return np.array(val, dtype=np.float64)


def _model_from_doc(doc, repair):
    if not isinstance(doc, dict):
        raise ParseError("model: top level must be a JSON object")
    if _field(doc, "version", "int") != SCHEMA_VERSION:
        raise ParseError(f"model: unsupported version {doc['version']!r}")
    K = _field(doc, "K", "int")
    d = _field(doc, "d", "int")
    if K < 1 or d < 1:
        raise ParseError("model: K and d must be positive")
    norm_kind = _field(doc, "norm_kind", "str")
    stages = []
    for i, st in enumerate(_field(doc, "stages", "list")):
        where = f"stages[{i}]"
        shape = _field(st, "shape", "list", where)
        if len(shape) != 4 or not all(isinstance(s, int) and s > 0 for s in shape):
            raise ParseError(f"{where}: field 'shape' must be four positive ints")
        try:
            raw = base64.b64decode(_field(st, "data", "str", where), validate=True)
        except ValueError:
            raise ParseError(f"{where}: field 'data' is not valid base64") from None
        if len(raw) != 8 * int(np.prod(shape)):
            raise ParseError(f"{where}: field 'data' holds {len(raw)} bytes, "
                             f"expected {8 * int(np.prod(shape))}")
        stages.append(np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64))
    scale = _field(doc, "spectral_scale", "num")
    groups = _field(doc, "groups", "list")
    if len(groups) != K:
        raise ParseError(f"model: field 'groups' has {len(groups)} entries, expected K={K}")
    Q = np.stack([_floats(_field(g, "Q", "list", f"groups[{k}]"), d * d, f"groups[{k}].Q")
                  .reshape(d, d) for k, g in enumerate(groups)])
    tau = np.array([_field(g, "tau", "num", f"groups[{k}]") for k, g in enumerate(groups)],
                   dtype=np.float64)
    table = _field(doc, "mu_table", "list")
    if not table:
        raise ParseError("model: field 'mu_table' is empty")
    sig = np.array([_field(row, "sigma", "num", f"mu_table[{j}]") for j, row in enumerate(table)],
                   dtype=np.float64)
    mus = np.stack([_floats(_field(row, "mu", "list", f"mu_table[{j}]"), K, f"mu_table[{j}].mu")
                    for j, row in enumerate(table)])
    lam = _field(doc, "lambda_default", "num")
    fb = FilterBank(stages, scale)
    return MfoeModel(fb, Q, tau, sig, mus, norm_kind, lam, repair=repair)


def save_model(model, path):
    Path(path).write_text(json.dumps(model.to_dict(), indent=1))


def load_model(path, repair=False):
    """Read a weight file; invariant violations raise unless ``repair`` is set."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ParseError(f"{path}: not valid JSON ({err})") from None
    return _model_from_doc(doc, repair)
