"""Sequential Bayesian optimization over a hidden event set.

Each step fits the posterior on the events revealed so far, scores every
unexplored candidate region with the configured acquisition, reveals the
dataset events inside the winning region, and appends a trace record.  The
grid eigendecomposition and the prior covariance are computed once per run.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np

from .acquisition import AcquisitionSpec, score_candidates
from .errors import InputError
from .inference import (
    EventSet,
    FitConfig,
    fit_posterior,
    flat_posterior,
    prior_covariance,
)
from .kernels import (
    DEFAULT_JITTER_SCALE,
    Grid,
    KernelSpec,
    build_model,
)
from .links import LinkFunction


@dataclass(frozen=True, eq=False)
class Region:
    """Axis-aligned box given by a center and a half-width radius."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))
        if not self.radius > 0:
            raise InputError("region radius must be positive")

    def box(self):
        return self.center - self.radius, self.center + self.radius

    def contains(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        lo, hi = self.box()
        return np.all((pts >= lo) & (pts <= hi), axis=1)


@dataclass(frozen=True, eq=False)
class BOConfig:
    budget: int
    initial_regions: tuple
    acquisition: AcquisitionSpec
    fit: FitConfig
    kernel: KernelSpec
    link: LinkFunction
    grid: Grid
    candidate_centers: np.ndarray | None = None
    candidate_stride: float | None = None

    def __post_init__(self):
        if self.budget < 1:
            raise InputError("budget must be at least 1")
        if not self.initial_regions:
            raise InputError("at least one initial region is required")
        object.__setattr__(self, "initial_regions", tuple(self.initial_regions))


@dataclass(frozen=True, eq=False)
class BOStep:
    """One trace record: what was scored, selected, and revealed."""

    index: int
    region: Region
    selected_candidate: int
    scores: np.ndarray
    new_events: np.ndarray
    revealed_count: int
    mean_g: np.ndarray
    std: np.ndarray
    intensity: np.ndarray
    duration_seconds: float


@dataclass(frozen=True, eq=False)
class BOTrace:
    steps: tuple
    candidate_centers: np.ndarray
    region_radius: float


def reveal(dataset: EventSet, regions) -> EventSet:
    """Events of the dataset inside the union of region boxes (inclusive)."""
    if not regions:
        return dataset.subset(np.zeros(dataset.n, dtype=bool))
    mask = np.zeros(dataset.n, dtype=bool)
    for region in regions:
        mask |= region.contains(dataset.events)
    return dataset.subset(mask)


def candidate_centers(grid: Grid, radius: float, stride: float | None = None) -> np.ndarray:
    """Uniform lattice of candidate centers with spacing ``stride``.

    The default stride equals the radius, giving 50% overlap between
    neighboring boxes.
    """
    if not radius > 0:
        raise InputError("radius must be positive")
    step = radius if stride is None else float(stride)
    if not step > 0:
        raise InputError("stride must be positive")
    per_dim = []
    for k in range(grid.dim):
        lo, hi = grid.lower[k] + radius, grid.upper[k] - radius
        if hi < lo:
            coords = np.array([0.5 * (grid.lower[k] + grid.upper[k])])
        else:
            coords = np.arange(lo, hi + 1e-9 * max(1.0, abs(hi)), step)
        per_dim.append(coords)
    return np.array(list(itertools.product(*per_dim)))


def run_bo(dataset: EventSet, cfg: BOConfig) -> BOTrace:
    """Run the sequential acquisition loop against a hidden dataset.

    Stops after ``budget`` steps or once every candidate has been explored.
    Selected regions are masked out so no region is chosen twice; ties go to
    the lowest candidate index.
    """
    grid = cfg.grid
    if np.any(dataset.events < grid.lower) or np.any(dataset.events > grid.upper):
        raise InputError("dataset events must lie inside the grid domain")

    model = build_model(cfg.kernel, grid, cfg.fit.gamma)
    prior = prior_covariance(grid, cfg.kernel, jitter=DEFAULT_JITTER_SCALE * cfg.kernel.variance)

    if cfg.candidate_centers is not None:
        centers = np.asarray(cfg.candidate_centers, dtype=float)
        if centers.ndim == 1:
            centers = centers.reshape(-1, 1)
    else:
        centers = candidate_centers(grid, cfg.initial_regions[0].radius, cfg.candidate_stride)
    radius = cfg.initial_regions[0].radius
    candidates = [Region(c, radius) for c in centers]

    revealed_mask = np.zeros(dataset.n, dtype=bool)
    for region in cfg.initial_regions:
        revealed_mask |= region.contains(dataset.events)
    explored = np.zeros(len(candidates), dtype=bool)

    steps = []
    for i in range(cfg.budget):
        if np.all(explored):
            break
        started = time.perf_counter()
        revealed = dataset.subset(revealed_mask)
        if revealed.n:
            posterior = fit_posterior(revealed, model, cfg.link, cfg.fit, prior=prior)
        else:
            posterior = flat_posterior(model, cfg.link, prior=prior)
        scores = score_candidates(posterior, candidates, cfg.acquisition, revealed)
        scores = np.where(explored, -np.inf, scores)
        selected = int(np.argmax(scores))
        explored[selected] = True
        region = candidates[selected]
        new_mask = region.contains(dataset.events) & ~revealed_mask
        revealed_mask |= new_mask
        steps.append(
            BOStep(
                index=i,
                region=region,
                selected_candidate=selected,
                scores=scores,
                new_events=dataset.events[new_mask].copy(),
                revealed_count=int(revealed_mask.sum()),
                mean_g=posterior.mean_g.copy(),
                std=posterior.std.copy(),
                intensity=posterior.intensity.copy(),
                duration_seconds=time.perf_counter() - started,
            )
        )
    return BOTrace(steps=tuple(steps), candidate_centers=centers, region_radius=radius)
