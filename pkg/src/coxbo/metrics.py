"""Intensity-estimation error metrics on the inference grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class MetricReport:
    l2: float
    iql50: float
    iql85: float
    grid_points_used: int


def _check_pair(truth, estimate):
    t = np.asarray(truth, dtype=float).reshape(-1)
    e = np.asarray(estimate, dtype=float).reshape(-1)
    if t.shape != e.shape:
        raise InputError("truth and estimate must have equal lengths")
    return t, e


def l2_distance(truth, estimate, cell_volume: float) -> float:
    """Volume-weighted L2 distance sqrt(sum (truth - estimate)^2 * cell_volume)."""
    t, e = _check_pair(truth, estimate)
    return float(np.sqrt(np.sum((t - e) ** 2) * cell_volume))


def iql(truth, estimate, rho: float, cell_volume: float) -> float:
    """Integrated rho-quantile (pinball) loss between truth and estimate.

    rho = 0.5 reduces to the integrated absolute error.
    """
    if not 0.0 < rho < 1.0:
        raise InputError("rho must lie strictly between 0 and 1")
    t, e = _check_pair(truth, estimate)
    gap = np.abs(t - e)
    weight = np.where(t > e, rho, 1.0 - rho)
    return float(np.sum(2.0 * gap * weight) * cell_volume)


def report(truth, estimate, cell_volume: float) -> MetricReport:
    t, e = _check_pair(truth, estimate)
    return MetricReport(
        l2=l2_distance(t, e, cell_volume),
        iql50=iql(t, e, 0.50, cell_volume),
        iql85=iql(t, e, 0.85, cell_volume),
        grid_points_used=int(t.shape[0]),
    )
