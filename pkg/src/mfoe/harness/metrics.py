"""Image quality metrics on [0, 1]-scaled images."""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from ..errors import DomainError

PSNR_CAP = 200.0
SSIM_SIGMA = 1.5
SSIM_RADIUS = 5
K1, K2 = 0.01, 0.03


@dataclass(frozen=True)
class MetricRecord:
    image_id: str
    psnr: float
    ssim: float
    runtime: float


def _pair(x, ref):
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise DomainError(f"shape mismatch: {x.shape} vs {ref.shape}")
    return x, ref


def psnr(x, ref, peak=1.0):
    """Peak signal-to-noise ratio in dB, capped at 200 dB."""
    x, ref = _pair(x, ref)
    mse = float(np.mean((x - ref) ** 2))
    if mse < 1e-20:
        return PSNR_CAP
    return min(PSNR_CAP, 10 * np.log10(peak * peak / mse))


def ssim(x, ref, peak=1.0):
    """Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5).

    Local statistics use population (not sample) covariances and the map is
    averaged over the pixels whose window lies entirely inside the image.
    """
    x, ref = _pair(x, ref)
    if x.ndim != 2 or min(x.shape) < 2 * SSIM_RADIUS + 1:
        raise DomainError("ssim needs 2-D images of at least 11x11 pixels")

    def blur(a):
        return gaussian_filter(a, SSIM_SIGMA, truncate=SSIM_RADIUS / SSIM_SIGMA)

    mx, my = blur(x), blur(ref)
    vx = blur(x * x) - mx * mx
    vy = blur(ref * ref) - my * my
    cov = blur(x * ref) - mx * my
    c1 = (K1 * peak) ** 2
    c2 = (K2 * peak) ** 2
    smap = ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
    r = SSIM_RADIUS
    return float(np.mean(smap[r:-r, r:-r]))
