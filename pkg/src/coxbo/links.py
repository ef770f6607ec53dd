"""Smooth non-negative link functions mapping a latent Gaussian field to an
intensity, with first and second derivatives and inverses.

All four links are total on the real line; only the inverses restrict their
argument to the link's range (positive reals, or the open unit interval for
the sigmoidal link).  Every function is vectorized over numpy arrays and
returns a plain float for scalar input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DomainError, InputError

LINK_NAMES = ("exponential", "quadratic", "sigmoidal", "softplus")


@dataclass(frozen=True)
class LinkFunction:
    """One of the four supported links, selected by name."""

    kind: str

    def __post_init__(self):
        if self.kind not in LINK_NAMES:
            raise InputError(
                f"unknown link {self.kind!r}; expected one of {LINK_NAMES}"
            )

    def __str__(self):
        return self.kind


def _as_array(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InputError("link functions require finite arguments")
    return x


def _unwrap(out, scalar):
    return float(out) if scalar else out


def _softplus(x):
    return np.logaddexp(0.0, x)


def _softplus_inv(y):
    # log(exp(y) - 1), split to avoid overflow of expm1 for large y
    out = np.empty_like(y)
    big = y > 30.0
    out[big] = y[big] + np.log1p(-np.exp(-y[big]))
    out[~big] = np.log(np.expm1(y[~big]))
    return out


def kappa(link: LinkFunction, x):
    """Evaluate the link at ``x``; the result is non-negative."""
    xs = _as_array(x)
    scalar = xs.ndim == 0
    xs = np.atleast_1d(xs)
    if link.kind == "exponential":
        out = np.exp(xs)
    elif link.kind == "quadratic":
        out = xs * xs
    elif link.kind == "sigmoidal":
        out = expit(xs)
    else:
        out = _softplus(xs)
    return _unwrap(out if not scalar else out[0], scalar)


def kappa_dot(link: LinkFunction, x):
    """First derivative of the link."""
    xs = _as_array(x)
    scalar = xs.ndim == 0
    xs = np.atleast_1d(xs)
    if link.kind == "exponential":
        out = np.exp(xs)
    elif link.kind == "quadratic":
        out = 2.0 * xs
    elif link.kind == "sigmoidal":
        s = expit(xs)
        out = s * (1.0 - s)
    else:
        out = expit(xs)
    return _unwrap(out if not scalar else out[0], scalar)


def kappa_ddot(link: LinkFunction, x):
    """Second derivative of the link."""
    xs = _as_array(x)
    scalar = xs.ndim == 0
    xs = np.atleast_1d(xs)
    if link.kind == "exponential":
        out = np.exp(xs)
    elif link.kind == "quadratic":
        out = np.full_like(xs, 2.0)
    elif link.kind == "sigmoidal":
        s = expit(xs)
        out = s * (1.0 - s) * (1.0 - 2.0 * s)
    else:
        s = expit(xs)
        out = s * (1.0 - s)
    return _unwrap(out if not scalar else out[0], scalar)


def kappa_inv(link: LinkFunction, y):
    """Inverse link; the quadratic branch returns the non-negative root.

    Raises
    ------
    DomainError
        If ``y`` lies outside the link's range interior (``y > 0`` for the
        exponential, quadratic and softplus links, ``0 < y < 1`` for the
        sigmoidal link).  Callers that may hit the boundary should clamp
        first, see :func:`clamp_to_range`.
    """
    ys = np.asarray(y, dtype=float)
    scalar = ys.ndim == 0
    ys = np.atleast_1d(ys)
    if np.any(ys <= 0.0):
        raise DomainError(f"{link.kind} inverse requires positive values")
    if link.kind == "sigmoidal":
        if np.any(ys >= 1.0):
            raise DomainError("sigmoidal inverse requires values below 1")
        out = np.log(ys / (1.0 - ys))
    elif link.kind == "exponential":
        out = np.log(ys)
    elif link.kind == "quadratic":
        out = np.sqrt(ys)
    else:
        out = _softplus_inv(ys)
    return _unwrap(out if not scalar else out[0], scalar)


def clamp_to_range(link: LinkFunction, y, floor: float):
    """Clamp ``y`` into the open range of the link so the inverse is defined."""
    ys = np.asarray(y, dtype=float)
    if link.kind == "sigmoidal":
        return np.clip(ys, floor, 1.0 - 1e-9)
    return np.maximum(ys, floor)
