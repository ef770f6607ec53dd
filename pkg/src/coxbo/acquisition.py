"""Acquisition functions scoring candidate regions of the posterior.

Four criteria are supported: upper-confidence-bound peak search, idle-time
probability (few arrivals), cumulative-arrival probability (many arrivals),
and Bayesian online change-point probability driven by a run-length
posterior over discretized time bins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import links as _links
from .errors import InputError, NumericError
from .inference import EventSet, Posterior, grid_interpolate
from .kernels import uniform_grid
from .pointprocess import poisson_log_pmf

ACQUISITION_NAMES = ("ucb", "idle", "cumulative", "cpd")

DEFAULT_OMEGA = 0.8
DEFAULT_HAZARD = 0.1
DEFAULT_CPD_BINS = 50
DEFAULT_REGION_QUADRATURE = 128


@dataclass(frozen=True)
class AcquisitionSpec:
    """Named acquisition with its weight and thresholds.

    ``omega`` scales the posterior standard deviation added to the mean
    (``omega_sign`` flips it to subtraction); ``epsilon`` and ``xi`` are the
    idle / cumulative count thresholds; ``hazard_rate`` is the constant
    change-point hazard.
    """

    kind: str
    omega: float = DEFAULT_OMEGA
    epsilon: int = 0
    xi: int = 1
    hazard_rate: float = DEFAULT_HAZARD
    omega_sign: float = 1.0
    cpd_bins: int = DEFAULT_CPD_BINS
    quadrature_points: int = DEFAULT_REGION_QUADRATURE

    def __post_init__(self):
        if self.kind not in ACQUISITION_NAMES:
            raise InputError(
                f"unknown acquisition {self.kind!r}; expected one of {ACQUISITION_NAMES}"
            )
        if not np.isfinite(self.omega):
            raise InputError("omega must be finite")
        if self.epsilon < 0 or self.xi < 0:
            raise InputError("epsilon and xi must be non-negative")
        if not 0.0 < self.hazard_rate <= 1.0:
            raise InputError("hazard_rate must lie in (0, 1]")
        if self.omega_sign not in (-1.0, 1.0):
            raise InputError("omega_sign must be +1 or -1")
        if self.cpd_bins < 1 or self.quadrature_points < 1:
            raise InputError("cpd_bins and quadrature_points must be positive")


@dataclass(frozen=True, eq=False)
class RunLengthPosterior:
    """Probability masses over run lengths 0..k after k update steps."""

    masses: np.ndarray
    step: int

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float).reshape(-1)
        if np.any(m < 0) or abs(m.sum() - 1.0) > 1e-8:
            raise InputError("run-length masses must be a normalized distribution")
        object.__setattr__(self, "masses", m)

    @classmethod
    def initial(cls) -> "RunLengthPosterior":
        return cls(masses=np.array([1.0]), step=0)

    @property
    def size(self) -> int:
        return self.masses.shape[0]


def _clip_region(posterior: Posterior, region):
    lo, hi = region.box()
    grid = posterior.grid
    lo = np.maximum(lo, grid.lower)
    hi = np.minimum(hi, grid.upper)
    if np.any(lo >= hi):
        raise InputError("region does not intersect the domain")
    return lo, hi


def acq_ucb(posterior: Posterior, region, omega1: float) -> float:
    """Best mean-plus-omega*std over the grid points inside the region."""
    lo, hi = _clip_region(posterior, region)
    pts = posterior.grid.points
    mask = np.all((pts >= lo) & (pts <= hi), axis=1)
    if np.any(mask):
        return float(np.max(posterior.mean_g[mask] + omega1 * posterior.std[mask]))
    center = 0.5 * (lo + hi)
    mean = grid_interpolate(posterior.grid, posterior.mean_g, center)
    std = grid_interpolate(posterior.grid, posterior.std, center)
    return float(mean[0] + omega1 * std[0])


def region_intensity_mass(
    posterior: Posterior,
    region,
    omega: float,
    omega_sign: float = 1.0,
    quadrature_points: int = DEFAULT_REGION_QUADRATURE,
) -> float:
    """Integral over the region of kappa(mean + sign*omega*std)."""
    lo, hi = _clip_region(posterior, region)
    qgrid = uniform_grid(lo, hi, [int(quadrature_points)] * posterior.grid.dim)
    mean = grid_interpolate(posterior.grid, posterior.mean_g, qgrid.points)
    std = grid_interpolate(posterior.grid, posterior.std, qgrid.points)
    vals = _links.kappa(posterior.link, mean + omega_sign * omega * std)
    return float(np.sum(vals) * qgrid.cell_volume)


def _poisson_partial_sum(mass: float, up_to: int) -> float:
    if up_to < 0:
        return 0.0
    counts = np.arange(up_to + 1)
    return float(np.sum(np.exp(poisson_log_pmf(counts, mass))))


def acq_idle(
    posterior: Posterior,
    region,
    omega2: float,
    epsilon: int,
    omega_sign: float = 1.0,
    quadrature_points: int = DEFAULT_REGION_QUADRATURE,
) -> float:
    """Probability of at most epsilon arrivals in the region."""
    mass = region_intensity_mass(posterior, region, omega2, omega_sign, quadrature_points)
    return min(_poisson_partial_sum(mass, int(epsilon)), 1.0)


def acq_cumulative(
    posterior: Posterior,
    region,
    omega3: float,
    xi: int,
    omega_sign: float = 1.0,
    quadrature_points: int = DEFAULT_REGION_QUADRATURE,
) -> float:
    """Probability of at least xi arrivals in the region."""
    mass = region_intensity_mass(posterior, region, omega3, omega_sign, quadrature_points)
    return 1.0 - _poisson_partial_sum(mass, int(xi) - 1)


def cpd_step(
    rlp: RunLengthPosterior,
    bin_count: int,
    predictive_intensity,
    hazard_rate: float,
) -> RunLengthPosterior:
    """One run-length posterior update from the current bin's event count.

    ``predictive_intensity[r]`` is the expected count of the current bin
    under the hypothesis that the run is r bins long; slot 0 is the
    fresh-run predictive.  Growth moves mass from r to r+1 with probability
    (1 - hazard) weighted by that run's predictive; the change-point mass
    at r = 0 collects every hypothesis with probability hazard, weighted by
    the fresh-run predictive.  (Weighting the change branch by the old
    runs' predictives instead would pin the renormalized r = 0 mass at
    exactly the hazard for any data.)  All bookkeeping is in log space;
    masses are renormalized on exit.
    """
    if bin_count < 0:
        raise InputError("bin_count must be non-negative")
    if not 0.0 < hazard_rate <= 1.0:
        raise InputError("hazard_rate must lie in (0, 1]")
    lam = np.asarray(predictive_intensity, dtype=float).reshape(-1)
    if lam.shape[0] != rlp.size:
        raise InputError("predictive_intensity must give one rate per run length")

    with np.errstate(divide="ignore"):
        log_m = np.log(rlp.masses)
        log_stay = np.log1p(-hazard_rate) if hazard_rate < 1.0 else -np.inf
        log_h = np.log(hazard_rate)
    log_pi = poisson_log_pmf(np.full(rlp.size, float(bin_count)), lam)
    log_change = log_h + log_pi[0]  # masses sum to one
    log_new = np.concatenate(([log_change], log_m + log_pi + log_stay))
    total = logsumexp(log_new)
    if not np.isfinite(total):
        raise NumericError("run-length posterior underflowed to zero mass")
    masses = np.exp(log_new - total)
    masses /= masses.sum()
    return RunLengthPosterior(masses=masses, step=rlp.step + 1)


def changepoint_probabilities(bin_counts, bin_rates, hazard_rate: float) -> np.ndarray:
    """Change-point probability Pr(r = 0) after each bin of a count series.

    ``bin_rates[j]`` is the expected count of bin j; the predictive rate
    for a run of length r at bin k averages the last r bins' rates (the
    current bin's own rate when r = 0).
    """
    counts = np.asarray(bin_counts, dtype=float).reshape(-1)
    rates = np.asarray(bin_rates, dtype=float).reshape(-1)
    if counts.shape != rates.shape:
        raise InputError("bin_counts and bin_rates must have equal lengths")
    cum = np.concatenate(([0.0], np.cumsum(rates)))
    rlp = RunLengthPosterior.initial()
    out = np.empty(counts.shape[0])
    for k in range(counts.shape[0]):
        lam = np.empty(rlp.size)
        lam[0] = rates[k]
        if rlp.size > 1:
            r = np.arange(1, rlp.size)
            start = np.maximum(k - r, 0)
            lam[1:] = (cum[k] - cum[start]) / np.maximum(k - start, 1)
        rlp = cpd_step(rlp, int(counts[k]), lam, hazard_rate)
        out[k] = rlp.masses[0]
    return out


@dataclass(frozen=True, eq=False)
class ChangePointTrace:
    """Per-bin change-point probabilities over a 1D time discretization."""

    bin_edges: np.ndarray
    bin_centers: np.ndarray
    change_probs: np.ndarray


def changepoint_trace(
    posterior: Posterior,
    events: EventSet,
    hazard_rate: float = DEFAULT_HAZARD,
    num_bins: int = DEFAULT_CPD_BINS,
) -> ChangePointTrace:
    """Run the change-point recursion over binned events of a 1D domain.

    Bin rates come from the posterior intensity at bin centers, inflated by
    (1 + std) to fold the posterior uncertainty into the predictive.
    """
    if posterior.grid.dim != 1:
        raise InputError("change-point detection requires a 1-dimensional domain")
    lo, hi = posterior.grid.lower[0], posterior.grid.upper[0]
    edges = np.linspace(lo, hi, int(num_bins) + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    width = edges[1] - edges[0]
    counts, _ = np.histogram(events.events[:, 0], bins=edges)
    lam = grid_interpolate(posterior.grid, posterior.intensity, centers[:, None])
    std = grid_interpolate(posterior.grid, posterior.std, centers[:, None])
    rates = np.maximum(lam, 1e-12) * width * (1.0 + std)
    probs = changepoint_probabilities(counts, rates, hazard_rate)
    return ChangePointTrace(bin_edges=edges, bin_centers=centers, change_probs=probs)


def acq_changepoint(posterior: Posterior, region, trace: ChangePointTrace) -> float:
    """Largest change-point probability among bins overlapping the region."""
    lo, hi = _clip_region(posterior, region)
    overlap = (trace.bin_edges[1:] > lo[0]) & (trace.bin_edges[:-1] < hi[0])
    if not np.any(overlap):
        return 0.0
    return float(np.max(trace.change_probs[overlap]))


def score_candidates(
    posterior: Posterior,
    regions,
    spec: AcquisitionSpec,
    events: EventSet,
) -> np.ndarray:
    """Score every candidate region under the configured acquisition."""
    if spec.kind == "cpd":
        trace = changepoint_trace(posterior, events, spec.hazard_rate, spec.cpd_bins)
        return np.array([acq_changepoint(posterior, r, trace) for r in regions])
    if spec.kind == "ucb":
        return np.array([acq_ucb(posterior, r, spec.omega) for r in regions])
    if spec.kind == "idle":
        return np.array(
            [
                acq_idle(posterior, r, spec.omega, spec.epsilon, spec.omega_sign, spec.quadrature_points)
                for r in regions
            ]
        )
    return np.array(
        [
            acq_cumulative(posterior, r, spec.omega, spec.xi, spec.omega_sign, spec.quadrature_points)
            for r in regions
        ]
    )
