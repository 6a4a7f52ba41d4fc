"""
Multi-stage zero-padded convolutional analysis operator.

The operator maps a single-channel image of shape ``(H, W)`` to a stack of
``n_out`` filter responses of shape ``(n_out, H, W)``.  It is realized as a
chain of small multi-channel correlations, each with zero padding that keeps
the spatial size, followed by a global ``spectral_scale``.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, DomainError
from .linalg import power_iteration

DEFAULT_STAGE_SIZES = (5, 5, 3)
DEFAULT_CHANNELS = (4, 8)
NORMALIZATION_SIZE = 40


def _correlate(x, k):
    """Zero-padded 'same' correlation: x (C, H, W), k (O, C, s, s) -> (O, H, W)."""
    C, H, W = x.shape
    O, _, s, _ = k.shape
    r = s // 2
    xp = np.pad(x, ((0, 0), (r, r), (r, r)))
    win = sliding_window_view(xp, (s, s), axis=(1, 2))  # (C, H, W, s, s)
    cols = win.transpose(0, 3, 4, 1, 2).reshape(C * s * s, H * W)
    return (k.reshape(O, C * s * s) @ cols).reshape(O, H, W)


def _correlate_adjoint(y, k):
    """Adjoint of :func:`_correlate`: y (O, H, W) -> (C, H, W)."""
    O, H, W = y.shape
    _, C, s, _ = k.shape
    r = s // 2
    g = (k.reshape(O, C * s * s).T @ y.reshape(O, H * W)).reshape(C, s, s, H, W)
    xp = np.zeros((C, H + 2 * r, W + 2 * r))
    for i in range(s):
        for j in range(s):
            xp[:, i:i + H, j:j + W] += g[:, i, j]
    return xp[:, r:r + H, r:r + W]


class FilterBank:
    """Composition of zero-padded correlations with a global spectral scale.

    Parameters
    ----------
    stages : sequence of arrays
        Stage ``i`` has shape ``(c_out, c_in, s, s)`` with odd ``s``; the first
        stage has ``c_in == 1`` and each ``c_in`` matches the previous ``c_out``.
    spectral_scale : float
        Multiplier applied to the output of the last stage.
    """

    def __init__(self, stages, spectral_scale=1.0):
        stages = [np.array(k, dtype=np.float64) for k in stages]
        if not stages:
            raise ConfigurationError("a filter bank needs at least one stage")
        c_in = 1
        for i, k in enumerate(stages):
            if k.ndim != 4 or k.shape[2] != k.shape[3] or k.shape[2] % 2 == 0:
                raise ConfigurationError(
                    f"stage {i}: expected (out, in, s, s) with odd s, got {k.shape}")
            if k.shape[1] != c_in:
                raise ConfigurationError(
                    f"stage {i}: expected {c_in} input channels, got {k.shape[1]}")
            if not np.all(np.isfinite(k)):
                raise ConfigurationError(f"stage {i}: non-finite taps")
            c_in = k.shape[0]
            k.setflags(write=False)
        if not (np.isfinite(spectral_scale) and spectral_scale > 0):
            raise ConfigurationError(f"spectral_scale must be positive, got {spectral_scale!r}")
        self.stages = tuple(stages)
        self.spectral_scale = float(spectral_scale)

    def __repr__(self):
        shapes = ", ".join(str(k.shape) for k in self.stages)
        return f"FilterBank([{shapes}], spectral_scale={self.spectral_scale:.6g})"

    @property
    def n_out(self):
        return self.stages[-1].shape[0]

    @property
    def filter_size(self):
        """Side of the composed receptive field."""
        return sum(k.shape[2] for k in self.stages) - (len(self.stages) - 1)

    @classmethod
    def random(cls, n_out=60, stage_sizes=DEFAULT_STAGE_SIZES, channels=DEFAULT_CHANNELS,
               seed=0, normalize_size=NORMALIZATION_SIZE):
        """Zero-mean random bank, spectrally normalized at ``normalize_size``."""
        rng = np.random.default_rng(seed)
        chans = (1, *channels, n_out)
        if len(chans) != len(stage_sizes) + 1:
            raise ConfigurationError("need one channel count between every pair of stages")
        stages = []
        for i, s in enumerate(stage_sizes):
            k = rng.standard_normal((chans[i + 1], chans[i], s, s))
            k -= k.mean(axis=(2, 3), keepdims=True)
            stages.append(k / np.sqrt(chans[i] * s * s))
        fb = cls(stages).project_zero_mean()
        return fb.normalize_spectral(normalize_size, normalize_size)

    @classmethod
    def from_filters(cls, filters, spectral_scale=1.0):
        """Single-stage bank from correlation kernels of shape ``(n_out, s, s)``."""
        filters = np.asarray(filters, dtype=np.float64)
        return cls([filters[:, None]], spectral_scale)

    def _check_image(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise DomainError(f"expected a 2-D image, got shape {x.shape}")
        fs = self.filter_size
        if x.shape[0] < fs or x.shape[1] < fs:
            raise DomainError(f"image {x.shape} is smaller than the receptive field {fs}x{fs}")
        return x

    def apply(self, x):
        """Filter responses ``W x``, shape ``(n_out, H, W)``."""
        y = self._check_image(x)[None]
        for k in self.stages:
            y = _correlate(y, k)
        return self.spectral_scale * y

    def adjoint(self, c):
        """``W^T c`` for a coefficient stack of shape ``(n_out, H, W)``."""
        c = np.asarray(c, dtype=np.float64)
        if c.ndim != 3 or c.shape[0] != self.n_out:
            raise DomainError(f"expected a ({self.n_out}, H, W) stack, got {c.shape}")
        self._check_image(c[0])
        y = c
        for k in reversed(self.stages):
            y = _correlate_adjoint(y, k)
        return self.spectral_scale * y[0]

    def gram(self, x):
        return self.adjoint(self.apply(x))

    def composed_filters(self):
        """Effective correlation kernels, shape ``(n_out, fs, fs)``, including the scale."""
        fs = self.filter_size
        n = 3 * fs
        c = n // 2
        r = fs // 2
        out = np.empty((self.n_out, fs, fs))
        for o in range(self.n_out):
            e = np.zeros((self.n_out, n, n))
            e[o, c, c] = 1.0
            out[o] = self.adjoint(e)[c - r:c + r + 1, c - r:c + r + 1]
        return out

    def spectral_norm(self, height=NORMALIZATION_SIZE, width=NORMALIZATION_SIZE,
                      tol=1e-6, max_iter=500, seed=0):
        res = power_iteration(self.gram, (height, width), tol=tol, max_iter=max_iter, seed=seed)
        return float(np.sqrt(max(res.value, 0.0)))

    def normalize_spectral(self, height=NORMALIZATION_SIZE, width=NORMALIZATION_SIZE,
                           tol=1e-6, max_iter=500):
        """Copy whose spectral norm on ``height x width`` images is one."""
        nrm = self.spectral_norm(height, width, tol=tol, max_iter=max_iter)
        if nrm == 0:
            raise ConfigurationError("cannot normalize an all-zero filter bank")
        return FilterBank(self.stages, self.spectral_scale / nrm)

    def project_zero_mean(self):
        """Copy whose composed filters all have zero mean.

        Each final-stage kernel slice is made zero-sum, which zeroes the DC
        gain of every path through the chain regardless of earlier stages.
        """
        last = self.stages[-1]
        last = last - last.mean(axis=(2, 3), keepdims=True)
        return FilterBank((*self.stages[:-1], last), self.spectral_scale)

    def scaled(self, factor):
        return FilterBank(self.stages, self.spectral_scale * factor)
