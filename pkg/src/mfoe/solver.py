"""Accelerated gradient descent with objective-based restart."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericFailure

RECONSTRUCTION_TOL = 1e-5
RECONSTRUCTION_MAX_ITER = 1000
DENOISING_TOL = 1e-4
DENOISING_MAX_ITER = 300


@dataclass(frozen=True)
class SolveConfig:
    tol: float = RECONSTRUCTION_TOL
    max_iter: int = RECONSTRUCTION_MAX_ITER
    step: object = "auto"

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigurationError(f"tol must be positive, got {self.tol!r}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigurationError(f"max_iter must be a positive integer, got {self.max_iter!r}")
        if self.step != "auto" and not (isinstance(self.step, (int, float)) and self.step > 0):
            raise ConfigurationError(f"step must be 'auto' or positive, got {self.step!r}")


DENOISING = SolveConfig(DENOISING_TOL, DENOISING_MAX_ITER)


@dataclass
class SolveReport:
    iterations: int = 0
    restarts: int = 0
    rel_change: float = np.inf
    objective: list = field(default_factory=list)


def solve(objective, x0, step, tol=RECONSTRUCTION_TOL, max_iter=RECONSTRUCTION_MAX_ITER):
    """Minimize a smooth function with accelerated gradient steps and restarts.

    ``objective(z)`` returns ``(f(z), grad f(z))``.  The momentum is reset
    whenever the objective at the current extrapolated point exceeds the
    previous one.  Iteration stops once the relative change of the iterates
    ``||x_{k+1} - x_k|| / ||x_{k+1}||`` drops to ``tol`` or the counter
    passes ``max_iter``.

    Returns the last iterate and a :class:`SolveReport` whose objective trace
    holds ``f(z_k)`` for every iteration.
    """
    if not step > 0:
        raise ConfigurationError(f"step must be positive, got {step!r}")
    x = np.array(x0, dtype=np.float64)
    z = x.copy()
    t = 1.0
    f_prev = np.inf
    r = np.inf
    k = 0
    report = SolveReport()
    while r > tol and k <= max_iter:
        fz, g = objective(z)
        if not np.isfinite(fz) or not np.all(np.isfinite(g)):
            raise NumericFailure(f"non-finite objective or gradient at iteration {k}", k)
        x_new = z - step * g
        t_new = (1 + np.sqrt(1 + 4 * t * t)) / 2
        z = x_new + ((t - 1) / t_new) * (x_new - x)
        if fz > f_prev:
            z = x_new
            t_new = 1.0
            report.restarts += 1
        nx = np.linalg.norm(x_new)
        dx = np.linalg.norm(x_new - x)
        if not (np.isfinite(nx) and np.isfinite(dx)):
            raise NumericFailure(f"iterates diverged at iteration {k}", k)
        r = 0.0 if dx == 0 else (dx / nx if nx > 0 else np.inf)
        x, t, f_prev = x_new, t_new, fz
        report.objective.append(float(fz))
        k += 1
    report.iterations = k
    report.rel_change = float(r)
    return x, report


def _step(cfg, lipschitz):
    return 1.0 / lipschitz if cfg.step == "auto" else float(cfg.step)


def reconstruct(model, H, y, lam, sigma, x0, cfg=SolveConfig()):
    """Minimize ``0.5 ||H x - y||^2 + lam * R_sigma(x)`` starting at ``x0``.

    The automatic step is ``1 / (||H||^2 + lam)``.
    """
    y = np.asarray(y, dtype=np.float64)

    def objective(x):
        res = H.apply(x) - y
        if lam:
            rv, rg = model.value_grad(x, sigma)
        else:
            rv, rg = 0.0, 0.0
        return 0.5 * float(np.vdot(res, res)) + lam * rv, H.adjoint(res) + lam * rg

    step = _step(cfg, H.norm() ** 2 + lam)
    return solve(objective, x0, step, cfg.tol, cfg.max_iter)


def denoise(model, y, lam, sigma, cfg=DENOISING):
    """Proximal step of ``lam * R_sigma`` at ``y``: minimize ``0.5 ||x - y||^2 + lam R(x)``."""
    y = np.asarray(y, dtype=np.float64)

    def objective(x):
        res = x - y
        if lam:
            rv, rg = model.value_grad(x, sigma)
        else:
            rv, rg = 0.0, 0.0
        return 0.5 * float(np.vdot(res, res)) + lam * rv, res + lam * rg

    return solve(objective, y, _step(cfg, 1.0 + lam), cfg.tol, cfg.max_iter)
