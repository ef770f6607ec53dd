"""Poisson count probabilities, thinning-based event simulation, and the
1D synthetic benchmark intensities."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .errors import BoundViolationError, DomainError, InputError, NumericError
from .inference import EventSet
from .kernels import _as_points, uniform_grid

DEFAULT_QUADRATURE_POINTS = 512

SYNTHETIC_DOMAINS = {1: (0.0, 50.0), 2: (0.0, 5.0), 3: (0.0, 100.0)}
_PIECEWISE_KNOTS_X = np.array([0.0, 25.0, 50.0, 75.0, 100.0])
_PIECEWISE_KNOTS_Y = np.array([2.0, 3.0, 1.0, 2.5, 3.0])


@dataclass(frozen=True, eq=False)
class IntensityFunction:
    """Non-negative intensity over a box domain with a dominating bound."""

    evaluator: Callable
    upper_bound: float
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise InputError("intensity domain bounds are inconsistent")
        if not self.upper_bound > 0:
            raise InputError("upper_bound must be positive")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def evaluate(self, points) -> np.ndarray:
        pts = _as_points(points, self.dim)
        return np.asarray(self.evaluator(pts), dtype=float).reshape(pts.shape[0])


def poisson_log_pmf(n, lam) -> np.ndarray:
    """log P(N = n) for a Poisson rate, safe for lam = 0 and large n."""
    n_arr = np.atleast_1d(np.asarray(n, dtype=float))
    lam_arr = np.broadcast_to(np.atleast_1d(np.asarray(lam, dtype=float)), n_arr.shape).copy()
    if np.any(lam_arr < 0):
        raise InputError("Poisson rate must be non-negative")
    out = np.full(n_arr.shape, -np.inf)
    zero = lam_arr == 0
    out[zero & (n_arr == 0)] = 0.0
    pos = ~zero
    with np.errstate(divide="ignore"):
        out[pos] = n_arr[pos] * np.log(lam_arr[pos]) - lam_arr[pos] - gammaln(n_arr[pos] + 1.0)
    return out


def integrated_intensity(intensity, a, b, quadrature_points: int = DEFAULT_QUADRATURE_POINTS) -> float:
    """Midpoint-rule integral of the intensity over the box [a, b]."""
    lo = np.atleast_1d(np.asarray(a, dtype=float))
    hi = np.atleast_1d(np.asarray(b, dtype=float))
    if lo.shape != hi.shape:
        raise InputError("integration bounds must share one dimension count")
    if np.any(hi <= lo):
        raise InputError("integration upper bounds must exceed lower bounds")
    grid = uniform_grid(lo, hi, [int(quadrature_points)] * lo.shape[0])
    evaluate = intensity.evaluate if isinstance(intensity, IntensityFunction) else intensity
    vals = np.asarray(evaluate(grid.points), dtype=float).reshape(-1)
    return float(np.sum(vals) * grid.cell_volume)


def count_probability(
    intensity,
    a,
    b,
    n: int,
    quadrature_points: int = DEFAULT_QUADRATURE_POINTS,
) -> float:
    """P(exactly n events in [a, b]) under the given intensity.

    The mass of the region is computed by midpoint quadrature and the
    Poisson probability is evaluated in log space.
    """
    if n < 0:
        raise InputError("event count must be non-negative")
    mass = integrated_intensity(intensity, a, b, quadrature_points)
    if not np.isfinite(mass):
        raise NumericError("integrated intensity is not finite")
    return float(np.exp(poisson_log_pmf(n, mass)[0]))


def thinning_sample(intensity: IntensityFunction, rng_seed: int) -> EventSet:
    """Draw one realization of the point process by thinning.

    Candidates come from a homogeneous process at the dominating rate and
    are kept with probability lambda(t) / upper_bound.  Fixed seeds give
    bit-identical event sets.
    """
    rng = np.random.default_rng(rng_seed)
    total = rng.poisson(intensity.upper_bound * intensity.volume)
    pts = rng.uniform(intensity.lower, intensity.upper, size=(total, intensity.dim))
    if total:
        lam = intensity.evaluate(pts)
        if np.any(lam > intensity.upper_bound * (1.0 + 1e-9)):
            raise BoundViolationError(
                "intensity exceeds its dominating upper bound inside the domain"
            )
        keep = rng.random(total) < lam / intensity.upper_bound
        pts = pts[keep]
    return EventSet(pts, intensity.lower, intensity.upper)


def _lambda1(t):
    return 2.0 * np.exp(-t / 15.0) + np.exp(-(((t - 25.0) / 10.0) ** 2))


def _lambda2(t):
    return 5.0 * np.sin(t * t) + 6.0


def _lambda3(t):
    return np.interp(t, _PIECEWISE_KNOTS_X, _PIECEWISE_KNOTS_Y)


_SYNTHETIC = {1: _lambda1, 2: _lambda2, 3: _lambda3}


def synthetic_intensity(sid: int, t):
    """Benchmark intensity ``sid`` in {1, 2, 3} evaluated at time(s) ``t``."""
    if sid not in _SYNTHETIC:
        raise InputError("synthetic intensity id must be 1, 2 or 3")
    lo, hi = SYNTHETIC_DOMAINS[sid]
    ts = np.asarray(t, dtype=float)
    scalar = ts.ndim == 0
    ts = np.atleast_1d(ts)
    if np.any(ts < lo) or np.any(ts > hi):
        raise DomainError(f"synthetic intensity {sid} is defined on [{lo}, {hi}]")
    out = _SYNTHETIC[sid](ts)
    return float(out[0]) if scalar else out


def synthetic_intensity_fn(sid: int, upper_bound: float | None = None) -> IntensityFunction:
    """Wrap a benchmark intensity for thinning, bounding it numerically if needed."""
    if sid not in _SYNTHETIC:
        raise InputError("synthetic intensity id must be 1, 2 or 3")
    lo, hi = SYNTHETIC_DOMAINS[sid]
    if upper_bound is None:
        probe = np.linspace(lo, hi, 20001)
        upper_bound = float(np.max(_SYNTHETIC[sid](probe))) * 1.02

    def evaluator(points):
        return _SYNTHETIC[sid](np.asarray(points, dtype=float)[:, 0])

    return IntensityFunction(evaluator=evaluator, upper_bound=upper_bound, lower=[lo], upper=[hi])
