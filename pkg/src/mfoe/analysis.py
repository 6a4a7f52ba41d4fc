"""Introspection of a trained or synthetic model: responses, singular values, potentials."""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .linalg import power_iteration
from .potentials import psi_eval

DEFAULT_FFT_SIZE = 1500
DEFAULT_SVD_SIZE = 64


def _bank(obj):
    return getattr(obj, "filterbank", obj)


def impulse_response(model):
    """``W^T W`` applied to a centered Kronecker impulse, cropped to its support.

    The canvas is large enough for the zero padding to play no role, and the
    crop has side ``2 * filter_size - 1``.
    """
    fb = _bank(model)
    fs = fb.filter_size
    r = fs - 1
    n = 4 * fs + 1
    c = n // 2
    delta = np.zeros((n, n))
    delta[c, c] = 1.0
    return fb.gram(delta)[c - r:c + r + 1, c - r:c + r + 1]


def frequency_response(model, fft_size=DEFAULT_FFT_SIZE):
    """Magnitude of the zero-padded DFT of :func:`impulse_response`."""
    h = impulse_response(model)
    if fft_size < h.shape[0]:
        raise DomainError(f"fft_size {fft_size} is smaller than the response size {h.shape[0]}")
    return np.abs(np.fft.fft2(h, s=(fft_size, fft_size)))


@dataclass(frozen=True)
class SpectralReport:
    sigma_max: float
    sigma_min: float
    iterations: int
    converged: bool
    image_size: tuple


def min_singular_value(model, image_size=DEFAULT_SVD_SIZE, tol=1e-9, max_iter=20000, seed=0):
    """Extreme singular values of ``W`` on images of ``image_size``.

    ``sigma_max`` comes from power iteration on ``W^T W``.  The smallest one
    comes from power iteration on ``s I - W^T W`` with ``s = max(1, sigma_max^2)``,
    whose top eigenvalue is ``s - sigma_min^2``; for a normalized bank this
    is ``I - W^T W``.
    """
    fb = _bank(model)
    if np.isscalar(image_size):
        image_size = (int(image_size), int(image_size))
    shape = tuple(image_size)
    top = power_iteration(fb.gram, shape, tol=tol, max_iter=max_iter, seed=seed)
    smax2 = max(top.value, 0.0)
    s = max(1.0, smax2)
    low = power_iteration(lambda v: s * v - fb.gram(v), shape, tol=tol, max_iter=max_iter,
                          seed=seed + 1)
    sigma_min = float(np.sqrt(max(s - low.value, 0.0)))
    return SpectralReport(float(np.sqrt(smax2)), min(sigma_min, float(np.sqrt(smax2))),
                          top.iterations + low.iterations, top.converged and low.converged,
                          shape)


def export_potential_surface(group, xs, ys=None):
    """Potential values on the grid ``(xs[j], ys[i])``; extra coordinates are zero."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = xs if ys is None else np.asarray(ys, dtype=np.float64)
    pts = np.zeros((len(ys), len(xs), group.d))
    pts[..., 0] = xs[None, :]
    if group.d > 1:
        pts[..., 1] = ys[:, None]
    return psi_eval(group, pts)[0]


def write_surface_csv(path, xs, ys, field):
    """One ``x,y,value`` row per grid point."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "value"])
        for i, y in enumerate(ys):
            for j, x in enumerate(xs):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(field[i, j]))])
