"""Hyperparameter tuning: coarse-to-fine grid search and derivative-free calibration."""

import logging
import math

import numpy as np

from ..errors import ConfigurationError, NumericFailure
from ..potentials import MU_FLOOR
from ..solver import DENOISING, SolveConfig, denoise, reconstruct
from .metrics import psnr

log = logging.getLogger(__name__)

GRID_POINTS = 5
PATCH_SIZE = 40
MAX_TRAIN_SIGMA = 0.2
CALIBRATION_PARAMS = ("lambda", "mu_table", "tau", "q_offdiag")
GOLDEN = (math.sqrt(5) - 1) / 2


def _log_grid(lo, hi, n):
    if not (0 < lo <= hi):
        raise ConfigurationError(f"grid bounds must satisfy 0 < lo <= hi, got ({lo}, {hi})")
    if lo == hi:
        return np.array([float(lo)])
    return np.geomspace(lo, hi, n)


def _refine(grid, i, n):
    """Log grid spanning the coarse neighbours of ``grid[i]``."""
    if len(grid) == 1:
        return grid
    return np.geomspace(grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)], n)


def coarse_to_fine(score, lam_bounds, sigma_bounds=None, n=GRID_POINTS):
    """Maximize ``score(lam, sigma)`` over two nested logarithmic grids.

    The coarse ``n x n`` grid spans the bounds; the fine one spans the coarse
    neighbours of the incumbent.  With ``sigma_bounds=None`` only ``lam`` is
    searched and ``sigma`` is passed as ``None``.  Ties go to the smaller
    ``lam``, then the smaller ``sigma``.

    Returns ``(lam, sigma, best_score, evaluations)`` where ``evaluations``
    maps every visited ``(lam, sigma)`` to its score.
    """
    cache = {}

    def run(lams, sigmas):
        best = None
        for lam in lams:
            for sig in sigmas:
                key = (float(lam), None if sig is None else float(sig))
                if key not in cache:
                    s = score(*key)
                    cache[key] = s if np.isfinite(s) else -np.inf
                if best is None or cache[key] > cache[best]:
                    best = key
        return best

    lams = _log_grid(*lam_bounds, n)
    sigmas = [None] if sigma_bounds is None else _log_grid(*sigma_bounds, n)
    lam, sig = run(lams, sigmas)
    fine_l = _refine(lams, int(np.argmin(np.abs(lams - lam))), n)
    fine_s = [None] if sig is None else _refine(sigmas, int(np.argmin(np.abs(sigmas - sig))), n)
    best = run(fine_l, fine_s)
    # a fine point only wins if it beats the coarse incumbent
    if cache[best] <= cache[(lam, sig)]:
        best = (lam, sig)
    return best[0], best[1], cache[best], cache


def grid_search(validation, H, model, lam_bounds, sigma_bounds=None, cfg=SolveConfig(),
                n=GRID_POINTS):
    """Tune ``(lam, sigma)`` for mean PSNR over ``validation = [(x_clean, y), ...]``.

    TV-like models are tuned with ``sigma_bounds=None``: only ``lam`` moves.
    """
    validation = list(validation)
    if not validation:
        raise ConfigurationError("grid search needs a non-empty validation set")

    def score(lam, sigma):
        vals = []
        for x, y in validation:
            try:
                rec, _ = reconstruct(model, H, y, lam, 0.0 if sigma is None else sigma,
                                     H.init(y), cfg)
            except NumericFailure:
                return -np.inf
            vals.append(psnr(rec, x))
        log.debug("lam=%.4g sigma=%s psnr=%.3f", lam, sigma, np.mean(vals))
        return float(np.mean(vals))

    lam, sigma, best, _ = coarse_to_fine(score, lam_bounds, sigma_bounds, n)
    return lam, sigma, best


def sample_noise_levels(m, seed=0, high=MAX_TRAIN_SIGMA):
    """``m`` noise levels drawn from U(0, high), excluding zero."""
    rng = np.random.default_rng(seed)
    s = rng.uniform(0, high, size=m)
    return np.where(s > 0, s, high * 1e-6)


def extract_patches(images, count, size=PATCH_SIZE, seed=0):
    """``count`` square patches at seeded random offsets, cycling through ``images``."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        img = images[i % len(images)]
        h, w = img.shape
        if h < size or w < size:
            raise ConfigurationError(f"image {img.shape} smaller than patch size {size}")
        r = rng.integers(0, h - size + 1)
        c = rng.integers(0, w - size + 1)
        out.append(np.array(img[r:r + size, c:c + size]))
    return out


def denoising_loss(model, patches, sigmas, lam, seed=0, add_noise=True, cfg=DENOISING):
    """Mean of ``sigma_m^{-1/2} ||x*_m - x_m||_1`` over the patch set.

    ``x*_m`` denoises ``x_m + sigma_m n_m`` at strength ``lam`` and noise level
    ``sigma_m``; the noise is seeded, and ``add_noise=False`` drops it.
    """
    if len(patches) != len(sigmas) or not patches:
        raise ConfigurationError("need one noise level per patch and at least one patch")
    rng = np.random.default_rng(seed)
    total = 0.0
    for x, s in zip(patches, sigmas):
        noise = rng.standard_normal(x.shape)
        y = x + s * noise if add_noise else np.array(x, dtype=np.float64)
        xs, _ = denoise(model, y, lam, s, cfg)
        total += np.sum(np.abs(xs - x)) / math.sqrt(s)
    return total / len(patches)


def _apply(model, name, u):
    f = math.exp(u)
    if name == "lambda":
        return model.replace(lambda_default=model.lambda_default * f)
    if name == "mu_table":
        return model.replace(mu_values=np.maximum(model.mu_values * f, MU_FLOOR))
    if name == "tau":
        return model.replace(tau=model.tau * f, repair=True)
    if name == "q_offdiag":
        eye = np.eye(model.d, dtype=bool)
        Q = np.where(eye, model.Q, model.Q * f)
        return model.replace(Q=Q, repair=True)
    raise ConfigurationError(f"unknown calibration parameter {name!r}; "
                             f"choose from {CALIBRATION_PARAMS}")


def calibrate(model, patches, sigmas, params=("lambda",), seed=0, sweeps=3, evals=12,
              span=10.0, cfg=DENOISING):
    """Coordinate-wise golden-section search on log-scaled scalars of the model.

    Each parameter in ``params`` is a global multiplier searched in
    ``[1/span, span]`` with ``evals`` loss evaluations per coordinate and at
    most ``sweeps`` passes.  A candidate replaces the incumbent only if it
    lowers :func:`denoising_loss`, so the returned model is never worse than
    the input.  Non-finite losses reject the candidate.

    Returns ``(model, loss)``.
    """
    for p in params:
        if p not in CALIBRATION_PARAMS:
            raise ConfigurationError(f"unknown calibration parameter {p!r}")

    def loss(m):
        try:
            v = denoising_loss(m, patches, sigmas, m.lambda_default, seed, cfg=cfg)
        except (NumericFailure, FloatingPointError):
            return np.inf
        return v if np.isfinite(v) else np.inf

    best = loss(model)
    if not params:
        return model, best
    for sweep in range(sweeps):
        improved = False
        for name in params:
            cand, val = _golden(lambda u: loss(_apply(model, name, u)),
                                -math.log(span), math.log(span), evals)
            if val < best:
                model, best, improved = _apply(model, name, cand), val, True
                log.info("sweep %d: %s x%.4g -> loss %.6g", sweep, name, math.exp(cand), best)
        if not improved:
            break
    return model, best


def _golden(f, a, b, evals):
    """Golden-section minimization with exactly ``evals`` calls; returns the best point seen."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    seen = [(fc, c), (fd, d)]
    for _ in range(evals - 2):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
            seen.append((fc, c))
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
            seen.append((fd, d))
    val, u = min(seen, key=lambda t: (t[0], abs(t[1])))
    return u, val
