"""Synthetic test images in [0, 1]."""

import numpy as np


def piecewise_constant(n=64, seed=0, n_shapes=6):
    """Random rectangles and ellipses painted over a constant background."""
    rng = np.random.default_rng(seed)
    img = np.full((n, n), rng.uniform(0.1, 0.3))
    yy, xx = np.mgrid[:n, :n]
    for i in range(n_shapes):
        level = rng.uniform(0.2, 0.9)
        cy, cx = rng.uniform(0.2 * n, 0.8 * n, size=2)
        hy, hx = rng.uniform(0.08 * n, 0.25 * n, size=2)
        if i % 2:
            inside = (np.abs(yy - cy) <= hy) & (np.abs(xx - cx) <= hx)
        else:
            inside = ((yy - cy) / hy) ** 2 + ((xx - cx) / hx) ** 2 <= 1
        img[inside] = level
    return img


def disk(n=128, radius=None, edge=3.0):
    """Centered disk of value one whose rim ramps linearly over ``edge`` pixels."""
    radius = 0.3 * n if radius is None else radius
    c = (n - 1) / 2
    yy, xx = np.mgrid[:n, :n]
    r = np.hypot(yy - c, xx - c)
    if edge <= 0:
        return (r <= radius).astype(np.float64)
    return np.clip(0.5 - (r - radius) / edge, 0.0, 1.0)


def gaussian_blob(n=128, width=10.0, offset=(0.0, 0.0)):
    c = (n - 1) / 2
    yy, xx = np.mgrid[:n, :n]
    return np.exp(-((yy - c - offset[0]) ** 2 + (xx - c - offset[1]) ** 2) / (2 * width ** 2))
