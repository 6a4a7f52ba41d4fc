"""
Experiment configuration and execution.

A run reads images, builds the forward operator, simulates measurements,
reconstructs, and writes per-image outputs plus a manifest from which the
run can be repeated exactly.  Every random draw is derived from the
manifest seed.
"""

import csv
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..analysis import (export_potential_surface, frequency_response, impulse_response,
                        min_singular_value, write_surface_csv)
from ..errors import ConfigurationError
from ..operators import make_operator, simulate
from ..phantoms import piecewise_constant
from ..regularizer import MfoeModel, load_model, save_model
from ..solver import RECONSTRUCTION_MAX_ITER, RECONSTRUCTION_TOL, SolveConfig, denoise, \
    reconstruct
from .io import list_images, read_image, write_array, write_pgm
from .metrics import MetricRecord, psnr, ssim
from .search import calibrate, extract_patches, grid_search, sample_noise_levels

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

RECON_TASKS = ("denoise", "deblur", "mri", "ct")
TASKS = RECON_TASKS + ("analyze", "gridsearch", "calibrate")
OPERATOR_KIND = {"denoise": "identity", "deblur": "blur", "mri": "mri", "ct": "ct"}


@dataclass
class ExperimentConfig:
    task: str
    seed: int
    output: str = "mfoe-run"
    threads: int = 1
    sigma_w: float = 0.0
    lam: float = None
    sigma: float = None
    operator_kind: str = None
    model: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    operator: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    gridsearch: dict = field(default_factory=dict)
    calibrate: dict = field(default_factory=dict)
    analyze: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigurationError(f"task must be one of {TASKS}, got {self.task!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigurationError("an integer 'seed' is required")
        if not isinstance(self.threads, int) or self.threads < 1:
            raise ConfigurationError("'threads' must be a positive integer")
        if self.sigma_w < 0:
            raise ConfigurationError("'sigma_w' must be nonnegative")
        if self.task != "analyze" and not self.data:
            raise ConfigurationError(f"task {self.task!r} needs a [data] section")
        if self.task == "gridsearch" and "lambda_bounds" not in self.gridsearch:
            raise ConfigurationError("gridsearch needs [gridsearch] lambda_bounds")
        if self.task == "calibrate" and "params" not in self.calibrate:
            raise ConfigurationError("calibrate needs [calibrate] params")
        if self.lam is not None and self.lam < 0:
            raise ConfigurationError("'lambda' must be nonnegative")
        if self.operator_kind is None and self.task in RECON_TASKS:
            self.operator_kind = OPERATOR_KIND[self.task]

    @classmethod
    def from_dict(cls, doc, **overrides):
        doc = dict(doc)
        if "config" in doc and isinstance(doc["config"], dict):
            doc = dict(doc["config"])  # a run manifest
        if "lambda" in doc:
            doc["lam"] = doc.pop("lambda")
        doc.update({k: v for k, v in overrides.items() if v is not None})
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        if "task" not in doc:
            raise ConfigurationError("config is missing 'task'")
        if "seed" not in doc:
            raise ConfigurationError("config is missing 'seed'")
        return cls(**doc)

    def to_dict(self):
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return {k: v for k, v in d.items() if v is not None}

    def solve_config(self):
        tol = self.solver.get("tol", RECONSTRUCTION_TOL)
        it = self.solver.get("max_iter", RECONSTRUCTION_MAX_ITER)
        return SolveConfig(tol, it, self.solver.get("step", "auto"))


def load_config(path, **overrides):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigurationError(f"cannot read config {path}: {err}") from None
    try:
        doc = json.loads(text) if path.suffix == ".json" else tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as err:
        raise ConfigurationError(f"{path}: {err}") from None
    return ExperimentConfig.from_dict(doc, **overrides)


def build_model(spec, seed):
    kind = spec.get("kind", "file" if "path" in spec else "default")
    if kind == "file":
        if "path" not in spec:
            raise ConfigurationError("[model] kind='file' needs a path")
        return load_model(spec["path"], repair=spec.get("repair", False))
    if kind == "huber-tv":
        return MfoeModel.huber_tv(spec.get("mu", 1e-3), spec.get("lambda_default", 1.0))
    if kind == "default":
        return MfoeModel.default(spec.get("K", 15), spec.get("d", 4),
                                 spec.get("norm_kind", "linf"), spec.get("seed", seed))
    raise ConfigurationError(f"unknown model kind {kind!r}")


def load_images(spec, seed):
    """``[(image_id, image), ...]`` in a fixed order."""
    if "images" in spec:
        paths = [Path(p) for p in spec["images"]]
    elif "dir" in spec:
        paths = list_images(spec["dir"])
    elif spec.get("phantom") == "piecewise":
        n = spec.get("size", 64)
        return [(f"phantom_{i:03d}", piecewise_constant(n, seed=spec.get("phantom_seed", seed) + i))
                for i in range(spec.get("count", 1))]
    else:
        raise ConfigurationError("[data] needs 'images', 'dir' or phantom = 'piecewise'")
    out = []
    for p in paths:
        if not p.exists():
            raise ConfigurationError(f"image not found: {p}")
        out.append((p.stem, read_image(p)))
    return out


def image_seed(seed, index):
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


@dataclass
class ExperimentResult:
    output: Path
    records: list
    summary: dict


def _reconstruct_one(cfg, model, item, index):
    image_id, x = item
    H = make_operator(cfg.operator_kind, x.shape, **cfg.operator)
    y = simulate(H, x, cfg.sigma_w, image_seed(cfg.seed, index))
    lam = model.lambda_default if cfg.lam is None else cfg.lam
    sigma = cfg.sigma_w if cfg.sigma is None else cfg.sigma
    scfg = cfg.solve_config()
    start = time.perf_counter()
    if cfg.operator_kind == "identity":
        rec, report = denoise(model, y, lam, sigma, scfg)
    else:
        rec, report = reconstruct(model, H, y, lam, sigma, H.init(y), scfg)
    runtime = time.perf_counter() - start
    rec_metrics = MetricRecord(image_id, psnr(rec, x), ssim(rec, x), runtime)
    return y, rec, report, rec_metrics


def _write_metrics(out, records):
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image_id", "psnr", "ssim", "runtime_s"])
        for r in records:
            w.writerow([r.image_id, f"{r.psnr:.6f}", f"{r.ssim:.6f}", f"{r.runtime:.4f}"])


def run_experiment(cfg):
    """Execute one configured experiment and write its artifacts under ``cfg.output``."""
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    model = build_model(cfg.model, cfg.seed)
    manifest = {"mfoe_version": __version__, "seed": cfg.seed, "model_sha256": model.digest(),
                "config": cfg.to_dict()}
    summary = {}
    records = []
    if cfg.task in RECON_TASKS:
        items = load_images(cfg.data, cfg.seed)
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(lambda a: _reconstruct_one(cfg, model, *a),
                                    [(item, i) for i, item in enumerate(items)]))
        for (image_id, _), (y, rec, report, rec_metrics) in zip(items, results):
            write_array(out / f"measurement_{image_id}.mfoe", y)
            write_array(out / f"recon_{image_id}.mfoe", rec)
            write_pgm(out / f"recon_{image_id}.pgm", rec)
            records.append(rec_metrics)
            log.info("%s: psnr %.2f dB, %d iterations, %d restarts", image_id,
                     rec_metrics.psnr, report.iterations, report.restarts)
        _write_metrics(out, records)
        summary = {"mean_psnr": float(np.mean([r.psnr for r in records])),
                   "mean_ssim": float(np.mean([r.ssim for r in records])),
                   "mean_runtime_s": float(np.mean([r.runtime for r in records]))}
    elif cfg.task == "gridsearch":
        summary = _gridsearch(cfg, model)
    elif cfg.task == "calibrate":
        summary = _calibrate(cfg, model, out)
    else:
        summary = _analyze(cfg, model, out)
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return ExperimentResult(out, records, summary)


def _gridsearch(cfg, model):
    items = load_images(cfg.data, cfg.seed)
    kind = cfg.operator_kind or "identity"
    shape = items[0][1].shape
    if any(x.shape != shape for _, x in items):
        raise ConfigurationError("grid search needs validation images of one size")
    H = make_operator(kind, shape, **cfg.operator)
    pairs = [(x, simulate(H, x, cfg.sigma_w, image_seed(cfg.seed, i)))
             for i, (_, x) in enumerate(items)]
    gs = cfg.gridsearch
    sigma_bounds = gs.get("sigma_bounds")
    lam, sigma, best = grid_search(pairs, H, model, tuple(gs["lambda_bounds"]),
                                   None if sigma_bounds is None else tuple(sigma_bounds),
                                   cfg.solve_config(), gs.get("points", 5))
    return {"lambda": lam, "sigma": sigma, "mean_psnr": best}


def _calibrate(cfg, model, out):
    c = cfg.calibrate
    images = [x for _, x in load_images(cfg.data, cfg.seed)]
    patches = extract_patches(images, c.get("patches", 16), c.get("patch_size", 40), cfg.seed)
    sigmas = sample_noise_levels(len(patches), cfg.seed)
    scfg = SolveConfig(cfg.solver.get("tol", 1e-4), cfg.solver.get("max_iter", 300))
    tuned, loss = calibrate(model, patches, sigmas, tuple(c["params"]), cfg.seed,
                            c.get("sweeps", 3), c.get("evals", 12), c.get("span", 10.0), scfg)
    save_model(tuned, out / "calibrated_model.json")
    return {"loss": loss, "lambda": tuned.lambda_default, "model_sha256": tuned.digest()}


def _analyze(cfg, model, out):
    a = cfg.analyze
    h = impulse_response(model)
    write_array(out / "impulse_response.mfoe", h)
    write_pgm(out / "impulse_response.pgm", (h - h.min()) / max(np.ptp(h), 1e-300))
    fr = frequency_response(model, a.get("fft_size", 1500))
    write_array(out / "frequency_response.mfoe", fr)
    write_pgm(out / "frequency_response.pgm", np.fft.fftshift(fr) / max(fr.max(), 1e-300))
    rep = min_singular_value(model, a.get("image_size", 64), max_iter=a.get("max_iter", 20000))
    sigma = cfg.sigma if cfg.sigma is not None else cfg.sigma_w
    span = a.get("surface_range", 1.0)
    grid = np.linspace(-span, span, a.get("surface_points", 101))
    for k, g in enumerate(model.groups(sigma)):
        write_surface_csv(out / f"potential_{k:02d}.csv", grid, grid,
                          export_potential_surface(g, grid))
    return {"sigma_max": rep.sigma_max, "sigma_min": rep.sigma_min,
            "iterations": rep.iterations, "converged": rep.converged,
            "image_size": list(rep.image_size), "impulse_sum": float(h.sum())}
