"""Command-line experiment harness.

Subcommands
-----------
fit      MAP posterior (mean, covariance, metrics vs. a known truth)
bo       sequential region acquisition against a hidden dataset
synth    thinning-based synthetic event generation
metrics  error metrics of a saved intensity curve against a known truth

Every command reads a flat ``key = value`` config file (``#`` starts a
comment, unknown keys are rejected) and writes a JSON result record with
the top-level keys ``config, grid, mean, std, metrics, trace,
timing_seconds``.  Identical config and seed produce byte-identical output
up to the timing fields.  Files are written atomically.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import links as _links
from .acquisition import AcquisitionSpec
from .bo import BOConfig, Region, run_bo
from .errors import CoxError, InputError, ParseError
from .inference import (
    EventSet,
    FitConfig,
    fit_posterior,
)
from .kernels import (
    DEFAULT_LENGTHSCALE_FRACTION,
    Grid,
    KernelSpec,
    build_model,
    uniform_grid,
)
from .links import LinkFunction
from .metrics import report as metric_report
from .pointprocess import (
    SYNTHETIC_DOMAINS,
    synthetic_intensity,
    synthetic_intensity_fn,
    thinning_sample,
)

_VECTOR_KEYS = {"domain_lower", "domain_upper", "kernel_lengthscales"}
_POINTS_KEYS = {"initial_centers"}
_INT_VECTOR_KEYS = {"grid_points"}
_INT_KEYS = {
    "synthetic",
    "max_iters",
    "seed",
    "replicates",
    "epsilon",
    "xi",
    "cpd_bins",
    "budget",
    "quadrature_points",
}
_FLOAT_KEYS = {
    "kernel_variance",
    "gamma",
    "learning_rate",
    "grad_tolerance",
    "floor",
    "omega",
    "omega_sign",
    "hazard",
    "region_radius",
    "candidate_stride",
    "upper_bound",
}
_STR_KEYS = {"dataset", "link", "acquisition", "curve_out", "estimate"}
_ALL_KEYS = _VECTOR_KEYS | _POINTS_KEYS | _INT_VECTOR_KEYS | _INT_KEYS | _FLOAT_KEYS | _STR_KEYS


@dataclass
class ExperimentConfig:
    """Resolved experiment configuration; unset optionals stay ``None``."""

    dataset: str | None = None
    synthetic: int | None = None
    domain_lower: tuple | None = None
    domain_upper: tuple | None = None
    grid_points: tuple | None = None
    link: str = "quadratic"
    kernel_variance: float = 1.0
    kernel_lengthscales: tuple | None = None
    gamma: float = 1.0
    learning_rate: float = 1e-3
    max_iters: int = 5000
    grad_tolerance: float = 1e-6
    floor: float = 1e-12
    seed: int = 0
    replicates: int = 1
    acquisition: str = "ucb"
    omega: float = 0.8
    omega_sign: float = 1.0
    epsilon: int = 0
    xi: int = 1
    hazard: float = 0.1
    cpd_bins: int = 50
    budget: int = 25
    region_radius: float = 2.0
    initial_centers: tuple | None = None
    candidate_stride: float | None = None
    quadrature_points: int = 128
    upper_bound: float | None = None
    curve_out: str | None = None
    estimate: str | None = None

    def echo(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = [list(v) if isinstance(v, tuple) else v for v in value]
            out[f.name] = value
        return out


def _parse_vector(raw: str):
    return tuple(float(tok) for tok in raw.replace(",", " ").split())


def _parse_points(raw: str):
    points = []
    for chunk in raw.split(";"):
        chunk = chunk.strip()
        if chunk:
            points.append(_parse_vector(chunk))
    return tuple(points)


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse a flat key/value config document into an ExperimentConfig."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"config line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _ALL_KEYS:
            raise InputError(f"config line {lineno}: unknown key {key!r}")
        if key in values:
            raise InputError(f"config line {lineno}: duplicate key {key!r}")
        try:
            if key in _VECTOR_KEYS:
                values[key] = _parse_vector(raw)
            elif key in _POINTS_KEYS:
                values[key] = _parse_points(raw)
            elif key in _INT_VECTOR_KEYS:
                values[key] = tuple(int(tok) for tok in raw.replace(",", " ").split())
            elif key in _INT_KEYS:
                values[key] = int(raw)
            elif key in _FLOAT_KEYS:
                values[key] = float(raw)
            else:
                values[key] = raw
        except ValueError as exc:
            raise ParseError(f"config line {lineno}: {exc}") from exc
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"config file not found: {p}")
    return parse_config_text(p.read_text(encoding="utf-8"))


def ingest_events(path, fmt: str = "csv", domain_lower=None, domain_upper=None) -> EventSet:
    """Read an events CSV (d numeric columns, optional header).

    Domain bounds default to the data extent padded by 1% per dimension.
    """
    if fmt != "csv":
        raise InputError(f"unsupported event format {fmt!r}")
    p = Path(path)
    if not p.exists():
        raise InputError(f"event file not found: {p}")
    rows = []
    header_line = None
    ncols = None
    with p.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            tokens = [tok.strip() for tok in line.split(",")] if "," in line else line.split()
            try:
                row = [float(tok) for tok in tokens]
            except ValueError:
                if not rows and header_line is None:
                    header_line = lineno
                    continue
                raise ParseError(f"{p.name} line {lineno}: non-numeric value") from None
            if ncols is None:
                ncols = len(row)
            elif len(row) != ncols:
                raise ParseError(
                    f"{p.name} line {lineno}: expected {ncols} columns, found {len(row)}"
                )
            rows.append(row)
    if not rows:
        if header_line is not None:
            raise ParseError(f"{p.name} line {header_line}: non-numeric value")
        raise InputError(f"event file is empty: {p}")
    events = np.asarray(rows, dtype=float)
    if domain_lower is None or domain_upper is None:
        lo = events.min(axis=0)
        hi = events.max(axis=0)
        extent = hi - lo
        pad = np.where(extent > 0, 0.01 * extent, 0.5)
        domain_lower = lo - pad if domain_lower is None else domain_lower
        domain_upper = hi + pad if domain_upper is None else domain_upper
    return EventSet(events, domain_lower, domain_upper)


def _resolve_domain(cfg: ExperimentConfig, events: EventSet | None):
    if cfg.domain_lower is not None and cfg.domain_upper is not None:
        return np.asarray(cfg.domain_lower, float), np.asarray(cfg.domain_upper, float)
    if cfg.synthetic is not None:
        lo, hi = SYNTHETIC_DOMAINS[cfg.synthetic]
        return np.array([lo]), np.array([hi])
    if events is not None:
        return events.domain_lower, events.domain_upper
    raise InputError("config must give domain bounds, a synthetic id, or a dataset")


def _resolve_grid(cfg: ExperimentConfig, lo, hi) -> Grid:
    d = lo.shape[0]
    ppd = cfg.grid_points if cfg.grid_points is not None else ((100,) if d == 1 else (50,) * d)
    return uniform_grid(lo, hi, ppd)


def _resolve_kernel(cfg: ExperimentConfig, lo, hi) -> KernelSpec:
    if cfg.kernel_lengthscales is not None:
        return KernelSpec(cfg.kernel_variance, cfg.kernel_lengthscales)
    return KernelSpec(cfg.kernel_variance, DEFAULT_LENGTHSCALE_FRACTION * (hi - lo))


def _fit_config(cfg: ExperimentConfig, seed: int) -> FitConfig:
    return FitConfig(
        gamma=cfg.gamma,
        learning_rate=cfg.learning_rate,
        max_iters=cfg.max_iters,
        grad_tolerance=cfg.grad_tolerance,
        floor=cfg.floor,
        seed=seed,
    )


def _acquisition_spec(cfg: ExperimentConfig) -> AcquisitionSpec:
    return AcquisitionSpec(
        kind=cfg.acquisition,
        omega=cfg.omega,
        epsilon=cfg.epsilon,
        xi=cfg.xi,
        hazard_rate=cfg.hazard,
        omega_sign=cfg.omega_sign,
        cpd_bins=cfg.cpd_bins,
        quadrature_points=cfg.quadrature_points,
    )


def _load_events(cfg: ExperimentConfig, seed: int) -> EventSet:
    if cfg.dataset is not None:
        return ingest_events(cfg.dataset, "csv", cfg.domain_lower, cfg.domain_upper)
    if cfg.synthetic is not None:
        return thinning_sample(synthetic_intensity_fn(cfg.synthetic, cfg.upper_bound), seed)
    raise InputError("config must give either a dataset path or a synthetic id")


def _truth_on_points(cfg: ExperimentConfig, points: np.ndarray):
    if cfg.synthetic is None or points.shape[1] != 1:
        return None
    return synthetic_intensity(cfg.synthetic, points[:, 0])


def _intensity_std(posterior):
    # delta method: std of kappa(g) is |kappa'(g)| times the latent std
    return np.abs(_links.kappa_dot(posterior.link, posterior.mean_g)) * posterior.std


def _sanitize(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    return value


def write_json(path, record: dict) -> None:
    """Serialize deterministically (sorted keys) and rename into place."""
    p = Path(path)
    payload = json.dumps(_sanitize(record), indent=2, sort_keys=True, allow_nan=False)
    fd, tmp = tempfile.mkstemp(dir=p.parent or Path("."), prefix=p.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
        os.replace(tmp, p)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_curve_csv(path, points: np.ndarray, mean: np.ndarray, std: np.ndarray) -> None:
    p = Path(path)
    d = points.shape[1]
    header = ",".join([f"x{k + 1}" for k in range(d)] + ["mean", "std"])
    lines = [header]
    for i in range(points.shape[0]):
        coords = [f"{points[i, k]:.17g}" for k in range(d)]
        lines.append(",".join(coords + [f"{mean[i]:.17g}", f"{std[i]:.17g}"]))
    fd, tmp = tempfile.mkstemp(dir=p.parent or Path("."), prefix=p.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        os.replace(tmp, p)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _metric_dict(rep) -> dict:
    return {
        "l2": rep.l2,
        "iql50": rep.iql50,
        "iql85": rep.iql85,
        "grid_points_used": rep.grid_points_used,
    }


def _median_metrics(reports: list) -> dict:
    return {
        "l2": float(np.median([r["l2"] for r in reports])),
        "iql50": float(np.median([r["iql50"] for r in reports])),
        "iql85": float(np.median([r["iql85"] for r in reports])),
        "grid_points_used": reports[0]["grid_points_used"],
        "replicates": reports,
    }


def cmd_fit(cfg: ExperimentConfig, out) -> dict:
    """Fit the posterior (optionally over seeded replicates) and write JSON."""
    if cfg.replicates < 1:
        raise InputError("replicates must be at least 1")
    started = time.perf_counter()
    link = LinkFunction(cfg.link)
    per_replicate = []
    posterior = None
    events = None
    grid = None
    for r in range(cfg.replicates):
        seed = cfg.seed + r
        events = _load_events(cfg, seed)
        lo, hi = _resolve_domain(cfg, events)
        grid = _resolve_grid(cfg, lo, hi)
        kernel = _resolve_kernel(cfg, lo, hi)
        model = build_model(kernel, grid, cfg.gamma)
        posterior = fit_posterior(events, model, link, _fit_config(cfg, seed))
        truth = _truth_on_points(cfg, grid.points)
        if truth is not None:
            per_replicate.append(
                _metric_dict(metric_report(truth, posterior.intensity, grid.cell_volume))
            )
    if not per_replicate:
        metrics = None
    elif cfg.replicates == 1:
        metrics = per_replicate[0]
    else:
        metrics = _median_metrics(per_replicate)
    mean = posterior.intensity
    std = _intensity_std(posterior)
    record = {
        "config": cfg.echo(),
        "grid": grid.points.tolist(),
        "mean": mean.tolist(),
        "std": std.tolist(),
        "metrics": metrics,
        "trace": None,
        "timing_seconds": time.perf_counter() - started,
    }
    write_json(out, record)
    if cfg.curve_out:
        write_curve_csv(cfg.curve_out, grid.points, mean, std)
    return record


def cmd_bo(cfg: ExperimentConfig, out) -> dict:
    """Run the acquisition loop; writes the result plus a step trace file."""
    started = time.perf_counter()
    link = LinkFunction(cfg.link)
    events = _load_events(cfg, cfg.seed)
    lo, hi = _resolve_domain(cfg, events)
    grid = _resolve_grid(cfg, lo, hi)
    kernel = _resolve_kernel(cfg, lo, hi)
    if cfg.initial_centers is None:
        raise InputError("bo requires initial_centers in the config")
    regions = tuple(Region(np.asarray(c, float), cfg.region_radius) for c in cfg.initial_centers)
    bo_cfg = BOConfig(
        budget=cfg.budget,
        initial_regions=regions,
        acquisition=_acquisition_spec(cfg),
        fit=_fit_config(cfg, cfg.seed),
        kernel=kernel,
        link=link,
        grid=grid,
        candidate_stride=cfg.candidate_stride,
    )
    trace = run_bo(events, bo_cfg)
    last = trace.steps[-1]
    summary = [
        {
            "index": s.index,
            "center": s.region.center.tolist(),
            "radius": s.region.radius,
            "selected_candidate": s.selected_candidate,
            "new_event_count": int(s.new_events.shape[0]),
            "revealed_count": s.revealed_count,
            "best_score": float(np.max(s.scores[np.isfinite(s.scores)])),
            "duration_seconds": s.duration_seconds,
        }
        for s in trace.steps
    ]
    truth = _truth_on_points(cfg, grid.points)
    metrics = (
        _metric_dict(metric_report(truth, last.intensity, grid.cell_volume))
        if truth is not None
        else None
    )
    record = {
        "config": cfg.echo(),
        "grid": grid.points.tolist(),
        "mean": last.intensity.tolist(),
        "std": last.std.tolist(),
        "metrics": metrics,
        "trace": {
            "steps": summary,
            "candidate_centers": trace.candidate_centers.tolist(),
            "region_radius": trace.region_radius,
        },
        "timing_seconds": time.perf_counter() - started,
    }
    write_json(out, record)
    trace_path = Path(out).with_name(Path(out).stem + ".trace.json")
    full_steps = [
        {
            "index": s.index,
            "center": s.region.center.tolist(),
            "new_events": s.new_events.tolist(),
            "scores": [float(v) for v in s.scores],
            "mean_intensity": s.intensity.tolist(),
            "std": s.std.tolist(),
        }
        for s in trace.steps
    ]
    write_json(trace_path, {"steps": full_steps})
    return record


def cmd_synth(cfg: ExperimentConfig, out) -> dict:
    """Thin a synthetic intensity into an events CSV."""
    if cfg.synthetic is None:
        raise InputError("synth requires a synthetic id in the config")
    started = time.perf_counter()
    intensity = synthetic_intensity_fn(cfg.synthetic, cfg.upper_bound)
    events = thinning_sample(intensity, cfg.seed)
    p = Path(out)
    lines = [",".join(f"{v:.17g}" for v in row) for row in events.events]
    fd, tmp = tempfile.mkstemp(dir=p.parent or Path("."), prefix=p.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + ("\n" if lines else ""))
        os.replace(tmp, p)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return {
        "events_written": events.n,
        "path": str(p),
        "timing_seconds": time.perf_counter() - started,
    }


def _read_curve_csv(path):
    p = Path(path)
    if not p.exists():
        raise InputError(f"estimate file not found: {p}")
    rows = []
    with p.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            tokens = [t.strip() for t in line.split(",")]
            try:
                rows.append([float(t) for t in tokens])
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise ParseError(f"{p.name} line {lineno}: non-numeric value") from None
    if not rows:
        raise InputError(f"estimate file is empty: {p}")
    arr = np.asarray(rows, dtype=float)
    if arr.shape[1] < 3:
        raise InputError("estimate file needs coordinate, mean and std columns")
    return arr[:, :-2], arr[:, -2], arr[:, -1]


def cmd_metrics(cfg: ExperimentConfig, out) -> dict:
    """Score a saved intensity curve against the configured synthetic truth."""
    if cfg.synthetic is None:
        raise InputError("metrics requires a synthetic id in the config")
    if cfg.estimate is None:
        raise InputError("metrics requires an estimate path in the config")
    started = time.perf_counter()
    points, mean, std = _read_curve_csv(cfg.estimate)
    truth = _truth_on_points(cfg, points)
    if truth is None:
        raise InputError("metrics supports 1-dimensional synthetic truths only")
    lo, hi = _resolve_domain(cfg, None)
    grid = _resolve_grid(cfg, lo, hi)
    if grid.size != points.shape[0]:
        raise InputError(
            f"estimate has {points.shape[0]} rows but the configured grid has {grid.size}"
        )
    rep = metric_report(truth, mean, grid.cell_volume)
    record = {
        "config": cfg.echo(),
        "grid": points.tolist(),
        "mean": mean.tolist(),
        "std": std.tolist(),
        "metrics": _metric_dict(rep),
        "trace": None,
        "timing_seconds": time.perf_counter() - started,
    }
    write_json(out, record)
    return record


_DEFAULT_OUT = {
    "fit": "fit_result.json",
    "bo": "bo_result.json",
    "synth": "events.csv",
    "metrics": "metrics.json",
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="coxbo",
        description="Gaussian Cox process intensity inference and Bayesian optimization",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("fit", "bo", "synth", "metrics"):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="flat key = value config file")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument(
            "--replicates", type=int, default=None, help="override the replicate count"
        )
        cmd.add_argument("--out", default=None, help="output path")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.replicates is not None:
            if args.replicates < 1:
                raise InputError("replicates must be at least 1")
            cfg = replace(cfg, replicates=args.replicates)
        out = args.out if args.out is not None else _DEFAULT_OUT[args.command]
        handler = {"fit": cmd_fit, "bo": cmd_bo, "synth": cmd_synth, "metrics": cmd_metrics}
        handler[args.command](cfg, out)
    except CoxError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
