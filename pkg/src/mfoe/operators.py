"""
Forward operators for denoising, deblurring, Cartesian CS-MRI and parallel-beam CT.

Every operator exposes ``apply``, ``adjoint`` (exact, with respect to the
real inner product) and ``norm`` (spectral norm, estimated once by power
iteration and cached).
"""

import math
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .errors import DomainError
from .linalg import power_iteration


class ForwardOperator:
    kind = "abstract"
    norm_tol = 1e-6

    def __init__(self, shape):
        self.shape = tuple(shape)
        self._norm = None

    def _check(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.shape:
            raise DomainError(f"{self.kind}: expected image of shape {self.shape}, got {x.shape}")
        return x

    def _check_out(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != self.out_shape:
            raise DomainError(
                f"{self.kind}: expected measurements of shape {self.out_shape}, got {v.shape}")
        return v

    @property
    def out_shape(self):
        return self.shape

    def apply(self, x):
        raise NotImplementedError

    def adjoint(self, v):
        raise NotImplementedError

    def gram(self, x):
        return self.adjoint(self.apply(x))

    def norm(self):
        """Spectral norm from power iteration on ``H^T H`` (relative tolerance 1e-6)."""
        if self._norm is None:
            res = power_iteration(self.gram, self.shape, tol=self.norm_tol, max_iter=2000)
            self._norm = float(np.sqrt(max(res.value, 0.0)))
        return self._norm

    def init(self, y):
        """Image-domain starting point for a reconstruction from ``y``."""
        return self.adjoint(y)


def estimate_norm(H):
    return H.norm()


class Identity(ForwardOperator):
    kind = "identity"

    def apply(self, x):
        return self._check(x).copy()

    def adjoint(self, v):
        return self._check(v).copy()

    def norm(self):
        return 1.0

    def init(self, y):
        return np.array(y, dtype=np.float64)


class Blur(ForwardOperator):
    """Zero-padded 'same' convolution with a 2-D kernel.

    Even kernel sides are padded with a trailing zero row/column so the
    kernel has a well-defined center.
    """

    kind = "blur"

    def __init__(self, kernel, shape):
        super().__init__(shape)
        k = np.asarray(kernel, dtype=np.float64)
        if k.ndim != 2 or not np.all(np.isfinite(k)):
            raise DomainError("blur kernel must be a finite 2-D array")
        k = np.pad(k, ((0, 1 - k.shape[0] % 2), (0, 1 - k.shape[1] % 2)))
        self.kernel = k

    def apply(self, x):
        return fftconvolve(self._check(x), self.kernel, mode="same")

    def adjoint(self, v):
        return fftconvolve(self._check_out(v), self.kernel[::-1, ::-1], mode="same")

    def init(self, y):
        # the blurred measurements live on the image grid
        return np.array(y, dtype=np.float64)


def load_kernel(path):
    """Kernel from a plain-text matrix (rows of whitespace-separated numbers)."""
    k = np.loadtxt(Path(path), dtype=np.float64, ndmin=2)
    if not np.all(np.isfinite(k)):
        raise DomainError(f"{path}: kernel contains non-finite values")
    return k


def gaussian_kernel(size=25, sigma=1.6):
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-0.5 * (r / sigma) ** 2)
    k = np.outer(g, g)
    return k / k.sum()


def build_mri_mask(n=320, acc=4.0, center_fraction=0.08, seed=0):
    """Kept k-space columns (centered frequency indices) of a Cartesian mask.

    The ``floor(n * center_fraction)`` central columns are always kept; the
    rest of the ``floor(n / acc)`` columns are drawn uniformly without
    replacement from the remaining ones.
    """
    if not 0 < center_fraction < 1:
        raise DomainError(f"center_fraction must lie in (0, 1), got {center_fraction!r}")
    if not acc >= 1:
        raise DomainError(f"acceleration must be >= 1, got {acc!r}")
    # round before flooring so that e.g. 0.29 * 100 counts as 29
    n_center = math.floor(round(n * center_fraction, 9))
    total = math.floor(round(n / acc, 9))
    start = (n - n_center + 1) // 2
    center = np.arange(start, start + n_center)
    others = np.setdiff1d(np.arange(n), center)
    extra = max(total - n_center, 0)
    rng = np.random.default_rng(seed)
    picked = rng.choice(others, size=extra, replace=False) if extra else np.array([], int)
    return np.sort(np.concatenate([center, picked])).astype(int)


class MRI(ForwardOperator):
    """Real image -> masked columns of the centered unitary 2-D DFT.

    Complex measurements are stored with a trailing axis of length 2 holding
    the real and imaginary parts.
    """

    kind = "mri"

    def __init__(self, mask, n):
        super().__init__((n, n))
        mask = np.unique(np.asarray(mask, dtype=int))
        if mask.size == 0 or mask.min() < 0 or mask.max() >= n:
            raise DomainError(f"mask columns must lie in [0, {n - 1}]")
        self.mask = mask
        self.n = n

    @property
    def out_shape(self):
        return (self.n, len(self.mask), 2)

    def apply(self, x):
        k = np.fft.fftshift(np.fft.fft2(self._check(x), norm="ortho"))[:, self.mask]
        return np.stack([k.real, k.imag], axis=-1)

    def adjoint(self, v):
        v = self._check_out(v)
        k = np.zeros((self.n, self.n), dtype=np.complex128)
        k[:, self.mask] = v[..., 0] + 1j * v[..., 1]
        return np.fft.ifft2(np.fft.ifftshift(k), norm="ortho").real

    def init(self, y):
        # zero-filled inverse DFT
        return self.adjoint(y)


class CT(ForwardOperator):
    """Parallel-beam ray-driven projector with bilinear interpolation.

    Rays are sampled every ``ray_step`` pixels and weighted by that step, so
    each sinogram entry approximates a line integral in pixel units.  The
    adjoint scatters with the same weights, which makes it exact.
    Detectors are spaced ``detector_spacing`` pixels apart (one by default)
    and centered on the image.
    """

    kind = "ct"

    def __init__(self, angles, n_detectors, n, detector_spacing=1.0, ray_step=1.0):
        super().__init__((n, n))
        self.angles = np.asarray(angles, dtype=np.float64).reshape(-1)
        if n_detectors < 1 or len(self.angles) == 0:
            raise DomainError("CT needs at least one angle and one detector")
        self.n = n
        self.n_detectors = int(n_detectors)
        self.detector_spacing = float(detector_spacing)
        if not (self.detector_spacing > 0 and ray_step > 0):
            raise DomainError("detector spacing and ray step must be positive")
        self.ray_step = float(ray_step)
        self._geometry = [self._rays(a) for a in self.angles]

    @property
    def out_shape(self):
        return (len(self.angles), self.n_detectors)

    def _rays(self, theta):
        n = self.n
        c = (n - 1) / 2
        s = (np.arange(self.n_detectors) - (self.n_detectors - 1) / 2) * self.detector_spacing
        m = int(math.ceil((n * math.sqrt(2) / 2 + 1) / self.ray_step))
        t = np.arange(-m, m + 1) * self.ray_step
        ct, st = math.cos(theta), math.sin(theta)
        # row / column coordinates of every sample, shape (detectors, samples)
        col = c + s[:, None] * ct - t[None, :] * st
        row = c + s[:, None] * st + t[None, :] * ct
        r0 = np.floor(row)
        c0 = np.floor(col)
        fr = row - r0
        fc = col - c0
        r0 = r0.astype(np.int64)
        c0 = c0.astype(np.int64)
        det = np.broadcast_to(np.arange(self.n_detectors)[:, None], row.shape)
        idx, wts, dets = [], [], []
        for dr, dc, w in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc),
                          (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
            rr, cc = r0 + dr, c0 + dc
            ok = (rr >= 0) & (rr < n) & (cc >= 0) & (cc < n) & (w > 0)
            idx.append((rr * n + cc)[ok])
            wts.append(w[ok] * self.ray_step)
            dets.append(det[ok])
        return np.concatenate(idx), np.concatenate(wts), np.concatenate(dets)

    def apply(self, x):
        xf = self._check(x).reshape(-1)
        out = np.empty(self.out_shape)
        for a, (idx, w, det) in enumerate(self._geometry):
            out[a] = np.bincount(det, weights=w * xf[idx], minlength=self.n_detectors)
        return out

    def adjoint(self, v):
        v = self._check_out(v)
        img = np.zeros(self.n * self.n)
        for a, (idx, w, det) in enumerate(self._geometry):
            img += np.bincount(idx, weights=w * v[a, det], minlength=self.n * self.n)
        return img.reshape(self.shape)

    def fbp(self, sinogram):
        """Ram-Lak filtered back projection (used as a starting point only)."""
        sino = self._check_out(sinogram)
        nd = self.n_detectors
        ds = self.detector_spacing
        size = 1 << int(math.ceil(math.log2(2 * nd)))
        m = np.arange(size)
        m = np.where(m > size // 2, m - size, m)
        h = np.zeros(size)
        h[0] = 1 / (4 * ds * ds)
        odd = m % 2 == 1
        h[odd] = -1 / (np.pi * m[odd] * ds) ** 2
        filt = np.fft.rfft(h)
        q = np.fft.irfft(np.fft.rfft(sino, n=size, axis=1) * filt, n=size, axis=1)[:, :nd] * ds
        # the adjoint spreads each value over ~1/ds lattice points per unit area
        return self.adjoint(q) * ds * np.pi / len(self.angles)

    def init(self, y):
        return self.fbp(y)


def radon(H, x):
    return H.apply(x)


def back_project(H, sinogram):
    return H.adjoint(sinogram)


def fbp(H, sinogram):
    return H.fbp(sinogram)


def simulate(H, x_clean, sigma_w, seed=0):
    """Noisy measurements ``H x + w`` with ``w ~ N(0, sigma_w^2)`` per real component."""
    y = H.apply(x_clean)
    if sigma_w == 0:
        return y
    rng = np.random.default_rng(seed)
    return y + sigma_w * rng.standard_normal(y.shape)


def make_operator(kind, shape, **params):
    """Factory used by the experiment harness."""
    if kind in ("identity", "denoise"):
        return Identity(shape)
    if kind in ("blur", "deblur"):
        kernel = params.get("kernel")
        if kernel is None:
            kernel = (load_kernel(params["kernel_path"]) if "kernel_path" in params
                      else gaussian_kernel(params.get("kernel_size", 25),
                                           params.get("kernel_sigma", 1.6)))
        return Blur(kernel, shape)
    if kind == "mri":
        n = shape[0]
        if shape[0] != shape[1]:
            raise DomainError("MRI images must be square")
        mask = build_mri_mask(n, params.get("acc", 4.0), params.get("center_fraction", 0.08),
                              params.get("mask_seed", 0))
        return MRI(mask, n)
    if kind == "ct":
        if shape[0] != shape[1]:
            raise DomainError("CT images must be square")
        n_angles = params.get("n_angles", 60)
        angles = np.linspace(0, np.pi, n_angles, endpoint=False)
        return CT(angles, params.get("n_detectors", 256), shape[0],
                  params.get("detector_spacing", 1.0), params.get("ray_step", 1.0))
    raise DomainError(f"unknown operator kind {kind!r}")
