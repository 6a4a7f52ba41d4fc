import numpy as np
import pytest

from mfoe.errors import ConfigurationError, NumericFailure
from mfoe.operators import Identity
from mfoe.regularizer import MfoeModel
from mfoe.solver import DENOISING, SolveConfig, denoise, reconstruct, solve

from conftest import small_model


def quadratic(A, b):
    def f(x):
        Ax = A @ x
        return 0.5 * x @ Ax - b @ x, Ax - b
    return f


def gradient_descent(f, x0, step, n):
    x = x0.copy()
    for _ in range(n):
        x = x - step * f(x)[1]
    return x


def test_lambda_zero_denoise_returns_input():
    y = np.random.default_rng(0).uniform(size=(16, 16))
    x, rep = denoise(small_model(), y, 0.0, 0.1, SolveConfig(1e-8, 300))
    assert np.max(np.abs(x - y)) <= 1e-6
    assert rep.iterations == 1


@pytest.mark.parametrize("seed", range(5))
def test_spd_quadratic_matches_direct_solve(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(8, 8))
    A = M @ M.T + 0.5 * np.eye(8)
    b = rng.normal(size=8)
    L = np.linalg.eigvalsh(A)[-1]
    x, _ = solve(quadratic(A, b), np.zeros(8), 1 / L, tol=1e-13, max_iter=100_000)
    ref = np.linalg.solve(A, b)
    assert np.linalg.norm(x - ref) <= 1e-6 * np.linalg.norm(ref)


def ill_conditioned(n=40, seed=0):
    rng = np.random.default_rng(seed)
    U, _ = np.linalg.qr(rng.normal(size=(n, n)))
    A = U @ np.diag(np.logspace(0, -4, n)) @ U.T
    return A, rng.normal(size=n)


def test_restart_on_ill_conditioned_quadratic():
    A, b = ill_conditioned()
    f = quadratic(A, b)
    n_max = 1000
    x, rep = solve(f, np.zeros(len(b)), 1.0, tol=1e-15, max_iter=n_max)
    assert rep.restarts >= 1
    gd = gradient_descent(f, np.zeros(len(b)), 1.0, 10 * n_max)
    assert f(x)[0] <= f(gd)[0]


def test_objective_at_restarts_decreases():
    A, b = ill_conditioned(seed=1)
    # stop before the iterates reach the rounding floor, where restarts are noise
    _, rep = solve(quadratic(A, b), np.zeros(len(b)), 1.0, tol=1e-15, max_iter=1700)
    obj = rep.objective
    at_restart = [obj[k] for k in range(1, len(obj)) if obj[k] > obj[k - 1]]
    assert len(at_restart) == rep.restarts >= 3
    assert all(a > b for a, b in zip(at_restart, at_restart[1:]))


def test_fixed_point_exits_after_one_iteration():
    A, b = ill_conditioned(n=10)
    xstar = np.linalg.solve(A, b)
    f = quadratic(A, b)
    assert np.linalg.norm(f(xstar)[1]) < 1e-10
    x, rep = solve(f, xstar, 1.0, tol=1e-5)
    assert rep.iterations == 1
    assert rep.rel_change <= 1e-5


def test_iteration_cap():
    A, b = ill_conditioned()
    _, rep = solve(quadratic(A, b), np.zeros(len(b)), 1.0, tol=1e-300, max_iter=7)
    # the loop runs while k <= max_iter
    assert rep.iterations == 8
    assert len(rep.objective) == 8


def test_determinism():
    m = small_model()
    y = np.random.default_rng(3).uniform(size=(20, 20))
    a, ra = denoise(m, y, 2.0, 0.1)
    b, rb = denoise(m, y, 2.0, 0.1)
    assert np.array_equal(a, b)
    assert ra.objective == rb.objective


def test_non_finite_objective_raises():
    def f(x):
        return (np.nan if x[0] > 1 else 0.5 * x @ x), x - 5
    with pytest.raises(NumericFailure) as err:
        solve(f, np.zeros(2), 0.5, tol=1e-12, max_iter=100)
    assert err.value.iteration >= 1


def test_reconstruct_identity_matches_denoise():
    m = MfoeModel.huber_tv(mu=0.01)
    y = np.random.default_rng(4).uniform(size=(16, 16))
    a, _ = denoise(m, y, 0.5, 0.0, DENOISING)
    b, _ = reconstruct(m, Identity((16, 16)), y, 0.5, 0.0, y, DENOISING)
    np.testing.assert_allclose(a, b, atol=1e-14)


def test_huber_tv_denoising_gain():
    from mfoe.harness.metrics import psnr
    from mfoe.phantoms import piecewise_constant
    x = piecewise_constant(64, seed=1)
    y = x + 25 / 255 * np.random.default_rng(1).standard_normal(x.shape)
    out, rep = denoise(MfoeModel.huber_tv(), y, 300.0, 0.0, SolveConfig(1e-5, 1000))
    assert psnr(out, x) >= psnr(y, x) + 2
    assert np.all(np.isfinite(rep.objective))


@pytest.mark.parametrize("kwargs", [
    dict(tol=0.0), dict(max_iter=0), dict(max_iter=2.5), dict(step=-1.0), dict(step="big"),
])
def test_solve_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        SolveConfig(**kwargs)


def test_bad_step():
    with pytest.raises(ConfigurationError):
        solve(lambda x: (0.0, x), np.zeros(2), 0.0)


def test_defaults():
    assert (SolveConfig().tol, SolveConfig().max_iter) == (1e-5, 1000)
    assert (DENOISING.tol, DENOISING.max_iter) == (1e-4, 300)


def test_divergent_step_raises_instead_of_stopping():
    # overflowing iterates make the relative change NaN, which must not read as convergence
    with np.errstate(all="ignore"), pytest.raises(NumericFailure):
        solve(lambda z: (0.5 * float(np.sum(z * z)), z), np.ones(4), step=1e6, max_iter=500)
