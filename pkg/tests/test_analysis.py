import csv

import numpy as np
import pytest

from mfoe.analysis import (
    export_potential_surface,
    frequency_response,
    impulse_response,
    min_singular_value,
    write_surface_csv,
)
from mfoe.errors import DomainError
from mfoe.filterbank import FilterBank
from mfoe.potentials import PotentialGroup, moreau_linf
from mfoe.regularizer import MfoeModel

from conftest import small_model
from oracles import dense_matrix, gram_impulse_response


def difference_bank():
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 1], k[0, 0, 1, 2] = 1.0, -1.0
    return FilterBank([k])


def test_difference_filter_gives_second_difference():
    h = impulse_response(difference_bank())
    expected = np.zeros((5, 5))
    expected[2, 1:4] = [-1, 2, -1]
    np.testing.assert_allclose(h, expected, atol=1e-15)


def test_difference_filter_frequency_response():
    n = 64
    mag = frequency_response(difference_bank(), fft_size=n)
    f = np.arange(n) / n
    # W^T W has transfer function |1 - e^{-2 pi i f}|^2 = 4 sin^2(pi f) along the filtered axis
    np.testing.assert_allclose(mag[0], 4 * np.sin(np.pi * f) ** 2, atol=1e-12)
    np.testing.assert_allclose(np.sqrt(mag[0]), 2 * np.abs(np.sin(np.pi * f)), atol=1e-7)
    # constant along the other axis
    np.testing.assert_allclose(mag, np.broadcast_to(mag[0], mag.shape), atol=1e-12)


@pytest.fixture(scope="module")
def default_model():
    return MfoeModel.default()


def test_default_model_response(default_model):
    h = impulse_response(default_model)
    assert h.shape == (21, 21)
    assert abs(h.sum()) <= 1e-10
    # symmetric: W^T W is self-adjoint and shift invariant away from the border
    np.testing.assert_allclose(h, h[::-1, ::-1], atol=1e-14)
    mag = frequency_response(default_model)
    assert mag.shape == (1500, 1500)
    assert mag[0, 0] < 1e-10


def test_response_matches_brute_force():
    for seed in range(3):
        fb = small_model(seed=seed).filterbank
        ref = gram_impulse_response(fb.stages, fb.spectral_scale)
        h = impulse_response(fb)
        assert h.shape == ref.shape
        np.testing.assert_allclose(h, ref, atol=1e-12)


def test_zero_bank_response():
    fb = FilterBank([np.zeros((2, 1, 3, 3))])
    assert np.all(impulse_response(fb) == 0)


def test_fft_size_too_small():
    with pytest.raises(DomainError):
        frequency_response(difference_bank(), fft_size=4)


def shift_bank(copies=1):
    # reads x[i + 1, j + 1]: row 0 and column 0 are never seen
    k = np.zeros((copies, 1, 3, 3))
    k[:, 0, 2, 2] = 1 / np.sqrt(copies)
    return FilterBank([k])


def test_identity_bank_singular_values():
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 1] = 1.0
    rep = min_singular_value(FilterBank([k]), image_size=12)
    assert rep.sigma_min == pytest.approx(1.0, abs=1e-9)
    assert rep.sigma_max == pytest.approx(1.0, abs=1e-9)
    assert rep.converged and rep.image_size == (12, 12)


@pytest.mark.parametrize("copies", [1, 3])
def test_rank_deficient_bank(copies):
    rep = min_singular_value(shift_bank(copies), image_size=10)
    assert rep.sigma_min < 1e-6
    assert rep.sigma_max == pytest.approx(1.0, abs=1e-9)


def test_sigma_max_agrees_with_normalization():
    fb = small_model(seed=1).filterbank
    rep = min_singular_value(fb, image_size=8, max_iter=3000)
    assert rep.sigma_max == pytest.approx(fb.spectral_norm(8, 8, tol=1e-12, max_iter=5000),
                                          abs=1e-6)
    assert rep.sigma_max == pytest.approx(1.0, abs=1e-6)
    assert rep.sigma_min <= rep.sigma_max


def test_min_singular_value_against_dense_svd():
    fb = small_model(seed=2).filterbank
    s = np.linalg.svd(dense_matrix(fb.apply, (8, 8)), compute_uv=False)
    rep = min_singular_value(fb, image_size=8, tol=1e-13, max_iter=200_000)
    assert rep.sigma_min == pytest.approx(s[-1], abs=1e-4)
    assert rep.sigma_max == pytest.approx(s[0], abs=1e-6)


def test_surface_minimum_at_origin():
    g = PotentialGroup([[0.5, 0.2], [0.2, 0.5]], 1.0, 0.1)
    xs = np.linspace(-1, 1, 41)
    field = export_potential_surface(g, xs)
    assert field.shape == (41, 41)
    assert field[20, 20] == 0
    assert np.all(np.delete(field.ravel(), 20 * 41 + 20) > 0)
    # even under x -> -x
    np.testing.assert_allclose(field, field[::-1, ::-1], atol=1e-15)


def test_surface_with_zero_q():
    g = PotentialGroup(np.zeros((3, 3)), 0.5, 0.2)
    xs = np.linspace(-1, 1, 21)
    field = export_potential_surface(g, xs)
    pts = np.stack(np.meshgrid(xs, xs), axis=-1)
    pts = np.concatenate([pts, np.zeros((21, 21, 1))], axis=-1)
    np.testing.assert_allclose(field, 0.2 * moreau_linf(pts, 0.2)[0], atol=1e-15)
    # non-decreasing outward along both axes
    assert np.all(np.diff(field[10, 10:]) >= 0) and np.all(np.diff(field[10:, 10]) >= 0)


def test_surface_csv(tmp_path):
    g = PotentialGroup(0.5 * np.eye(2), 1.0, 0.1)
    xs, ys = np.linspace(-1, 1, 5), np.linspace(-0.5, 0.5, 3)
    field = export_potential_surface(g, xs, ys)
    path = tmp_path / "s.csv"
    write_surface_csv(path, xs, ys, field)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["x", "y", "value"] and len(rows) == 16
    vals = np.array([float(r[2]) for r in rows[1:]]).reshape(3, 5)
    assert np.array_equal(vals, field)
