"""MAP intensity estimation and Laplace posterior covariance on a grid.

The fitted object is the square-root intensity ``h`` living in the RKHS of
the transformed kernel: the optimum is a finite expansion over the observed
events (dual coefficients), found by gradient descent on

    J(alpha) = -sum_i log h(t_i)^2 + alpha^T Ktilde alpha,   h = Ktilde alpha.

The transformed-kernel matrices are built with the grid cell volume as the
quadrature weight so that the merged L2 term integrates the intensity over
the actual observation domain.  The latent posterior covariance is the
inverse Hessian of the penalized log-posterior evaluated on the grid, with
the Gaussian prior assembled as a Kronecker product of per-dimension Gram
factors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import links as _links
from .errors import ConditioningError, InputError, OptimizationError
from .kernels import (
    DEFAULT_JITTER_SCALE,
    Grid,
    KernelSpec,
    TransformedKernelModel,
    _as_points,
    gram,
    transformed_gram,
)
from .links import LinkFunction

_BACKTRACK_LIMIT = 60
_COVARIANCE_JITTER_START = 1e-10
_COVARIANCE_JITTER_STOP = 1e2


@dataclass(frozen=True, eq=False)
class EventSet:
    """Ordered collection of d-dimensional event locations with domain bounds."""

    events: np.ndarray
    domain_lower: np.ndarray
    domain_upper: np.ndarray

    def __post_init__(self):
        ev = np.asarray(self.events, dtype=float)
        if ev.ndim == 1:
            ev = ev.reshape(-1, 1)
        if ev.ndim != 2:
            raise InputError("events must form an (n, d) array")
        lo = np.atleast_1d(np.asarray(self.domain_lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.domain_upper, dtype=float))
        if lo.shape != hi.shape or lo.shape[0] != ev.shape[1]:
            raise InputError("domain bounds must match event dimension")
        if np.any(hi <= lo):
            raise InputError("domain upper bounds must exceed lower bounds")
        if ev.shape[0] and (np.any(ev < lo) or np.any(ev > hi)):
            raise InputError("events must lie inside the domain box")
        object.__setattr__(self, "events", ev)
        object.__setattr__(self, "domain_lower", lo)
        object.__setattr__(self, "domain_upper", hi)

    @property
    def n(self) -> int:
        return self.events.shape[0]

    @property
    def dim(self) -> int:
        return self.events.shape[1]

    def subset(self, mask) -> "EventSet":
        return EventSet(self.events[np.asarray(mask)], self.domain_lower, self.domain_upper)


@dataclass(frozen=True, eq=False)
class DualCoefficients:
    """Representer weights alpha, one per fitted event."""

    alpha: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float).reshape(-1))


@dataclass(frozen=True)
class FitConfig:
    """Hyperparameters controlling the dual-coefficient gradient descent."""

    gamma: float = 1.0
    learning_rate: float = 1e-3
    max_iters: int = 5000
    grad_tolerance: float = 1e-6
    floor: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if not (self.gamma > 0 and self.learning_rate > 0 and self.grad_tolerance > 0):
            raise InputError("gamma, learning_rate and grad_tolerance must be positive")
        if self.max_iters < 1:
            raise InputError("max_iters must be at least 1")
        if not 0 < self.floor <= 1e-4:
            raise InputError("floor must lie in (0, 1e-4]")


@dataclass(frozen=True, eq=False)
class MapEstimate:
    """Posterior-mean fields on the grid, before covariance estimation."""

    grid: Grid
    mean_g: np.ndarray
    intensity: np.ndarray
    link: LinkFunction
    objective_value: float
    iterations: int
    grad_norm: float


@dataclass(frozen=True, eq=False)
class Posterior:
    """Laplace posterior of the latent field on the grid."""

    grid: Grid
    mean_g: np.ndarray
    intensity: np.ndarray
    covariance: np.ndarray
    std: np.ndarray
    link: LinkFunction
    dual: DualCoefficients


@dataclass(frozen=True, eq=False)
class PriorCovariance:
    """Gaussian prior covariance as a Kronecker product of 1D factors."""

    per_dim_factors: tuple
    assembled: np.ndarray


def objective(alpha, K_tilde, floor: float) -> float:
    """Penalized negative log-likelihood in dual coordinates.

    ``h = K_tilde @ alpha`` evaluates the representer expansion at the
    events; the floor keeps the log term finite when h crosses zero.
    """
    a = np.asarray(alpha, dtype=float).reshape(-1)
    K = np.asarray(K_tilde, dtype=float)
    h = K @ a
    hsq = np.maximum(h * h, floor)
    return float(-np.sum(np.log(hsq)) + a @ (K @ a))


def objective_gradient(alpha, K_tilde, floor: float) -> np.ndarray:
    """Gradient of :func:`objective`; the log term is inactive where floored."""
    a = np.asarray(alpha, dtype=float).reshape(-1)
    K = np.asarray(K_tilde, dtype=float)
    h = K @ a
    active = h * h > floor
    r = np.zeros_like(h)
    np.divide(1.0, h, out=r, where=active)
    return 2.0 * (K @ (a - r))


def _representer_curve(alpha, events: EventSet, model: TransformedKernelModel) -> np.ndarray:
    """Evaluate h on the grid via the eigensystem instead of a full grid Gram."""
    eig = model.eigensystem
    lam = eig.eigenvalues[: eig.rank]
    U = eig.eigenvectors[:, : eig.rank]
    K_xe = gram(model.grid.points, events.events, model.kernel)
    v = U.T @ (K_xe @ alpha)
    return U @ (v / (model.grid.cell_volume * lam + model.gamma))


def fit_map(
    events: EventSet,
    model: TransformedKernelModel,
    link: LinkFunction,
    cfg: FitConfig,
    init: str = "uniform",
):
    """Gradient-descent MAP fit of the dual coefficients.

    Runs constant-step descent with backtracking halving whenever a step
    would increase the objective, so accepted iterations never increase J.
    Returns the dual coefficients together with the grid evaluation of the
    posterior mean:  intensity = h^2 and mean_g = inverse link of the
    intensity clamped into the link's range.

    ``init`` selects the starting point: "uniform" (1/n, the reproducible
    default) or "random" (standard normal scaled by 1/n, seeded by
    ``cfg.seed``).
    """
    if events.n == 0:
        raise InputError("fitting requires at least one event")
    if np.any(events.events < model.grid.lower) or np.any(events.events > model.grid.upper):
        raise InputError("events fall outside the model grid domain")

    K = transformed_gram(events.events, events.events, model, weight=model.grid.cell_volume)
    K = 0.5 * (K + K.T)
    n = events.n
    if init == "uniform":
        a = np.full(n, 1.0 / n)
    elif init == "random":
        a = np.random.default_rng(cfg.seed).normal(0.0, 1.0 / n, size=n)
    else:
        raise InputError(f"unknown init {init!r}; expected 'uniform' or 'random'")

    # The loop tracks h = K a incrementally: the step a -> a - s*g moves h by
    # -s*(K g), so each backtracking trial costs O(n) instead of a matvec.
    floor = cfg.floor
    h = K @ a
    norm_term = float(a @ h)
    J = float(-np.sum(np.log(np.maximum(h * h, floor))) + norm_term)
    if not np.isfinite(J):
        raise OptimizationError("objective non-finite at iteration 0")
    grad_norm = np.inf
    iterations = 0
    for it in range(cfg.max_iters):
        r = np.zeros_like(h)
        np.divide(1.0, h, out=r, where=h * h > floor)
        g = 2.0 * (K @ (a - r))
        if not np.all(np.isfinite(g)):
            raise OptimizationError(f"gradient non-finite at iteration {it}")
        grad_norm = float(np.linalg.norm(g))
        if grad_norm <= cfg.grad_tolerance:
            break
        gK = K @ g
        gh = float(g @ h)
        ggK = float(g @ gK)
        step = cfg.learning_rate
        accepted = False
        for _ in range(_BACKTRACK_LIMIT):
            h_cand = h - step * gK
            norm_cand = norm_term - 2.0 * step * gh + step * step * ggK
            J_cand = float(-np.sum(np.log(np.maximum(h_cand * h_cand, floor))) + norm_cand)
            if np.isfinite(J_cand) and J_cand <= J:
                a = a - step * g
                h, norm_term, J = h_cand, norm_cand, J_cand
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break  # step underflow: stationary to machine precision
        iterations = it + 1
    J = objective(a, K, floor)

    h_grid = _representer_curve(a, events, model)
    intensity = h_grid * h_grid
    mean_g = _links.kappa_inv(link, _links.clamp_to_range(link, intensity, cfg.floor))
    dual = DualCoefficients(a)
    estimate = MapEstimate(
        grid=model.grid,
        mean_g=np.atleast_1d(mean_g),
        intensity=intensity,
        link=link,
        objective_value=J,
        iterations=iterations,
        grad_norm=grad_norm,
    )
    return dual, estimate


def prior_covariance(grid: Grid, spec: KernelSpec, jitter: float = 1e-8) -> PriorCovariance:
    """Prior covariance on the grid as a Kronecker product over dimensions.

    Each factor is the 1D Gram matrix of that dimension's grid coordinates
    (with the output variance split evenly across factors so the assembled
    matrix matches the full kernel) plus ``jitter`` on the diagonal.
    """
    if spec.dim != grid.dim:
        raise InputError("kernel dimension must match grid dimension")
    factors = []
    var_share = spec.variance ** (1.0 / grid.dim)
    for k in range(grid.dim):
        spec_k = KernelSpec(var_share, [spec.lengthscales[k]])
        S = gram(grid.axes[k][:, None], grid.axes[k][:, None], spec_k)
        S[np.diag_indices_from(S)] += jitter
        factors.append(S)
    assembled = factors[0]
    for S in factors[1:]:
        assembled = np.kron(assembled, S)
    return PriorCovariance(per_dim_factors=tuple(factors), assembled=assembled)


def event_cell_indices(events: EventSet, grid: Grid) -> np.ndarray:
    """Flat grid index of the cell containing each event."""
    if events.dim != grid.dim:
        raise InputError("event dimension must match grid dimension")
    idx = np.zeros(events.n, dtype=int)
    for k in range(grid.dim):
        col = np.floor((events.events[:, k] - grid.lower[k]) / grid.widths[k]).astype(int)
        col = np.clip(col, 0, grid.points_per_dim[k] - 1)
        idx = idx * grid.points_per_dim[k] + col
    return idx


def posterior_covariance(
    g_hat,
    events: EventSet,
    grid: Grid,
    link: LinkFunction,
    prior: PriorCovariance,
) -> np.ndarray:
    """Laplace covariance: inverse of (prior precision minus data Hessian).

    The data Hessian is diagonal: every grid cell carries the Riemann-sum
    curvature -kappa''(g_j) * cell_volume, and cells matched by observed
    events (nearest cell, within half a cell width per dimension) add
    (kappa'' kappa - kappa'^2) / kappa^2 once per event.  The result is
    symmetrized, and escalating diagonal jitter repairs any negative
    posterior variance produced by discretization.
    """
    g = np.asarray(g_hat, dtype=float).reshape(-1)
    m = grid.size
    if g.shape[0] != m:
        raise InputError("g_hat must be evaluated on the grid")
    if prior.assembled.shape != (m, m):
        raise InputError("prior covariance does not match the grid size")

    W = -_links.kappa_ddot(link, g) * grid.cell_volume
    if events.n:
        counts = np.bincount(event_cell_indices(events, grid), minlength=m).astype(float)
        hit = counts > 0
        gh = g[hit]
        k0 = _links.kappa(link, gh)
        k1 = _links.kappa_dot(link, gh)
        k2 = _links.kappa_ddot(link, gh)
        data = np.zeros(m)
        data[hit] = (k2 * k0 - k1 * k1) / (k0 * k0)
        W = W + counts * data

    inv_factors = [np.linalg.inv(S) for S in prior.per_dim_factors]
    sigma_inv = inv_factors[0]
    for S in inv_factors[1:]:
        sigma_inv = np.kron(sigma_inv, S)
    H = sigma_inv - np.diag(W)

    jitter = 0.0
    while True:
        H_try = H if jitter == 0.0 else H + jitter * np.eye(m)
        try:
            A = np.linalg.inv(H_try)
        except np.linalg.LinAlgError:
            A = None
        if A is not None:
            A = 0.5 * (A + A.T)
            if np.min(np.diag(A)) >= 0:
                return A
        jitter = _COVARIANCE_JITTER_START if jitter == 0.0 else jitter * 10.0
        if jitter > _COVARIANCE_JITTER_STOP:
            raise ConditioningError(
                "posterior precision stayed singular after jitter escalation"
            )


def grid_interpolate(grid: Grid, values, query) -> np.ndarray:
    """Multilinear interpolation of a grid field, constant beyond cell centers."""
    vals = np.asarray(values, dtype=float).reshape(-1)
    if vals.shape[0] != grid.size:
        raise InputError("field length must equal the grid size")
    q = _as_points(query, grid.dim)
    if np.any(q < grid.lower) or np.any(q > grid.upper):
        raise InputError("query points must lie inside the domain")
    if grid.dim == 1:
        return np.interp(q[:, 0], grid.axes[0], vals)
    clipped = np.clip(
        q,
        [ax[0] for ax in grid.axes],
        [ax[-1] for ax in grid.axes],
    )
    interp = RegularGridInterpolator(
        grid.axes, vals.reshape(grid.points_per_dim), method="linear"
    )
    return interp(clipped)


def posterior_at(posterior: Posterior, query):
    """Interpolated posterior mean and standard deviation at query points."""
    mean = grid_interpolate(posterior.grid, posterior.mean_g, query)
    std = grid_interpolate(posterior.grid, posterior.std, query)
    return mean, std


def fit_posterior(
    events: EventSet,
    model: TransformedKernelModel,
    link: LinkFunction,
    cfg: FitConfig,
    prior: PriorCovariance | None = None,
    init: str = "uniform",
) -> Posterior:
    """MAP fit followed by the Laplace covariance, packaged as a Posterior."""
    if prior is None:
        prior = prior_covariance(
            model.grid, model.kernel, jitter=DEFAULT_JITTER_SCALE * model.kernel.variance
        )
    dual, estimate = fit_map(events, model, link, cfg, init=init)
    cov = posterior_covariance(estimate.mean_g, events, model.grid, link, prior)
    std = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return Posterior(
        grid=model.grid,
        mean_g=estimate.mean_g,
        intensity=estimate.intensity,
        covariance=cov,
        std=std,
        link=link,
        dual=dual,
    )


def flat_posterior(
    model: TransformedKernelModel,
    link: LinkFunction,
    prior: PriorCovariance | None = None,
    intensity_level: float = 1e-3,
) -> Posterior:
    """Prior fallback used before any event has been observed.

    The mean is the inverse link of a small constant intensity and the
    covariance is the prior itself.
    """
    if prior is None:
        prior = prior_covariance(
            model.grid, model.kernel, jitter=DEFAULT_JITTER_SCALE * model.kernel.variance
        )
    level = _links.clamp_to_range(link, intensity_level, 1e-12)
    g0 = _links.kappa_inv(link, level)
    m = model.grid.size
    return Posterior(
        grid=model.grid,
        mean_g=np.full(m, float(g0)),
        intensity=np.full(m, float(intensity_level)),
        covariance=prior.assembled.copy(),
        std=np.sqrt(np.clip(np.diag(prior.assembled), 0.0, None)),
        link=link,
        dual=DualCoefficients(np.zeros(0)),
    )
