import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mfoe.filterbank import FilterBank  # noqa: E402
from mfoe.regularizer import MfoeModel  # noqa: E402


def small_model(K=3, d=2, norm_kind="linf", seed=0, mu=0.05, size=8):
    """Model whose 7x7 receptive field fits 8x8 images, normalized on ``size`` images.

    The normalization runs to a tight tolerance so nonexpansiveness checks
    are not polluted by power-iteration error.
    """
    fb = FilterBank.random(n_out=K * d, stage_sizes=(3, 3, 3), channels=(3, 4), seed=seed,
                           normalize_size=size)
    fb = fb.normalize_spectral(size, size, tol=1e-14, max_iter=20000)
    rng = np.random.default_rng(seed + 100)
    Q = 0.6 * np.eye(d) + 0.2 * rng.standard_normal((K, d, d))
    return MfoeModel(fb, Q, np.full(K, 1.5), [0.0, 0.2], np.full((2, K), mu), norm_kind,
                     repair=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
