"""RBF kernel evaluation, uniform-grid discretization, and the low-rank
transformed kernel obtained by folding an L2 penalty into the RKHS norm.

The transformed kernel shrinks every Mercer eigenvalue ``eta`` of the base
kernel to ``eta / (eta + gamma)``.  Since the RBF kernel has no convenient
closed-form expansion on a box, the eigenpairs are estimated from the
eigendecomposition of the Gram matrix on a uniform grid, and the transformed
kernel matrix is assembled directly from that eigensystem.  The
eigendecomposition depends only on the grid and kernel, so it is computed
once and reused while events accumulate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateKernelError, InputError

DEFAULT_EIG_TOLERANCE = 1e-10
DEFAULT_JITTER_SCALE = 1e-8
DEFAULT_LENGTHSCALE_FRACTION = 0.15


def _as_points(x, dim=None):
    """Coerce scalars / vectors / matrices to an (n, d) point array."""
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts.reshape(-1, 1) if dim in (None, 1) else pts.reshape(1, -1)
    elif pts.ndim != 2:
        raise InputError(f"expected point array of rank <= 2, got rank {pts.ndim}")
    if dim is not None and pts.shape[1] != dim:
        raise InputError(
            f"point dimension {pts.shape[1]} does not match expected {dim}"
        )
    return pts


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Squared-exponential kernel with one lengthscale per dimension."""

    variance: float
    lengthscales: np.ndarray

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "variance", float(self.variance))
        if not self.variance > 0:
            raise InputError("kernel variance must be positive")
        if ls.ndim != 1 or not np.all(ls > 0):
            raise InputError("kernel lengthscales must be a vector of positive reals")

    @property
    def dim(self) -> int:
        return self.lengthscales.shape[0]


def default_kernel(lower, upper, variance: float = 1.0) -> KernelSpec:
    """Kernel with lengthscales at 15% of the domain extent per dimension."""
    lo = np.atleast_1d(np.asarray(lower, dtype=float))
    hi = np.atleast_1d(np.asarray(upper, dtype=float))
    extent = hi - lo
    if np.any(extent <= 0):
        raise InputError("domain upper bounds must exceed lower bounds")
    return KernelSpec(variance, DEFAULT_LENGTHSCALE_FRACTION * extent)


def kernel_eval(a, b, spec: KernelSpec) -> float:
    """Evaluate the kernel between two points."""
    pa = _as_points(a, spec.dim)
    pb = _as_points(b, spec.dim)
    if pa.shape[0] != 1 or pb.shape[0] != 1:
        raise InputError("kernel_eval expects single points; use gram for batches")
    return float(gram(pa, pb, spec)[0, 0])


def gram(points_a, points_b, spec: KernelSpec) -> np.ndarray:
    """Kernel matrix with entry (i, j) = k(a_i, b_j)."""
    pa = _as_points(points_a, spec.dim)
    pb = _as_points(points_b, spec.dim)
    q = np.zeros((pa.shape[0], pb.shape[0]))
    for k in range(spec.dim):
        diff = (pa[:, k, None] - pb[None, :, k]) / spec.lengthscales[k]
        q += diff * diff
    return spec.variance * np.exp(-0.5 * q)


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform product grid of cell centers over a box domain."""

    lower: np.ndarray
    upper: np.ndarray
    points_per_dim: tuple
    points: np.ndarray
    cell_volume: float
    axes: tuple
    widths: np.ndarray

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def size(self) -> int:
        return self.points.shape[0]


def uniform_grid(lower, upper, points_per_dim) -> Grid:
    """Build a uniform grid of cell centers on the box [lower, upper]."""
    lo = np.atleast_1d(np.asarray(lower, dtype=float))
    hi = np.atleast_1d(np.asarray(upper, dtype=float))
    ppd = np.atleast_1d(np.asarray(points_per_dim, dtype=int))
    if ppd.shape[0] == 1 and lo.shape[0] > 1:
        ppd = np.repeat(ppd, lo.shape[0])
    if lo.shape != hi.shape or lo.shape != ppd.shape:
        raise InputError("grid bounds and points_per_dim must share one dimension count")
    if np.any(hi <= lo):
        raise InputError("grid upper bounds must exceed lower bounds")
    if np.any(ppd < 1):
        raise InputError("grid needs at least one point per dimension")
    widths = (hi - lo) / ppd
    axes = tuple(lo[k] + (np.arange(ppd[k]) + 0.5) * widths[k] for k in range(len(lo)))
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=-1)
    return Grid(
        lower=lo,
        upper=hi,
        points_per_dim=tuple(int(p) for p in ppd),
        points=points,
        cell_volume=float(np.prod(widths)),
        axes=axes,
        widths=widths,
    )


@dataclass(frozen=True, eq=False)
class GridEigensystem:
    """Eigendecomposition of the grid Gram matrix, eigenvalues descending.

    Only the leading ``rank`` eigenpairs (those above the relative drop
    tolerance) participate in kernel approximations; the trailing ones are
    numerically meaningless for dense grids and amplify noise if inverted.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    rank: int


def eigendecompose_grid(K_xx, tolerance: float = DEFAULT_EIG_TOLERANCE) -> GridEigensystem:
    """Eigendecompose a symmetric Gram matrix, dropping tiny eigenvalues.

    Eigenvalues below ``tolerance`` times the largest eigenvalue are dropped
    from the retained rank (they remain stored for reconstruction checks).

    Raises
    ------
    InputError
        If the matrix is not symmetric within 1e-10.
    DegenerateKernelError
        If no positive eigenvalue survives the tolerance.
    """
    K = np.asarray(K_xx, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InputError("gram matrix must be square")
    scale = max(1.0, float(np.max(np.abs(K))))
    if np.max(np.abs(K - K.T)) > 1e-10 * scale:
        raise InputError("gram matrix must be symmetric within 1e-10")
    w, v = np.linalg.eigh(0.5 * (K + K.T))
    w = w[::-1]
    v = v[:, ::-1]
    if w[0] <= 0:
        raise DegenerateKernelError("gram matrix has no positive eigenvalue")
    rank = int(np.sum(w >= tolerance * w[0]))
    if rank == 0:
        raise DegenerateKernelError("all eigenvalues fall below the drop tolerance")
    return GridEigensystem(eigenvalues=w, eigenvectors=v, rank=rank)


@dataclass(frozen=True, eq=False)
class TransformedKernelModel:
    """Grid eigensystem plus penalty, ready to evaluate the shrunken kernel."""

    kernel: KernelSpec
    grid: Grid
    eigensystem: GridEigensystem
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise InputError("penalty gamma must be positive")


def build_model(
    kernel: KernelSpec,
    grid: Grid,
    gamma: float,
    tolerance: float = DEFAULT_EIG_TOLERANCE,
    jitter_scale: float = DEFAULT_JITTER_SCALE,
) -> TransformedKernelModel:
    """Assemble the grid Gram matrix (with diagonal jitter) and eigendecompose.

    This is the one expensive step; reuse the returned model across fits on
    the same grid.
    """
    if kernel.dim != grid.dim:
        raise InputError("kernel dimension must match grid dimension")
    K = gram(grid.points, grid.points, kernel)
    K[np.diag_indices_from(K)] += jitter_scale * kernel.variance
    eig = eigendecompose_grid(K, tolerance)
    return TransformedKernelModel(kernel=kernel, grid=grid, eigensystem=eig, gamma=gamma)


def nystrom_eigenvalues(model: TransformedKernelModel) -> np.ndarray:
    """Eigenvalue estimates of the base kernel's expansion, one per retained mode."""
    eig = model.eigensystem
    return eig.eigenvalues[: eig.rank] / model.grid.size


def nystrom_eigenfunction(t, i: int, model: TransformedKernelModel):
    """Evaluate the i-th estimated eigenfunction at point(s) ``t``.

    At a grid point x_j this recovers sqrt(m) * U[j, i].  Returns a float for
    a single point, else a vector.
    """
    eig = model.eigensystem
    if not 0 <= i < eig.rank:
        raise IndexError(f"eigenfunction index {i} outside retained rank {eig.rank}")
    pts = _as_points(t, model.grid.dim)
    k_tx = gram(pts, model.grid.points, model.kernel)
    m = model.grid.size
    out = (math.sqrt(m) / eig.eigenvalues[i]) * (k_tx @ eig.eigenvectors[:, i])
    return float(out[0]) if pts.shape[0] == 1 else out


def shrinkage_coefficients(model: TransformedKernelModel, weight: float | None = None) -> np.ndarray:
    """Per-mode factors eta/(eta + gamma) applied by the transformed kernel.

    Every factor lies strictly inside (0, 1) and decreases as gamma grows.
    """
    eta = _mode_weight(model, weight) * model.eigensystem.eigenvalues[: model.eigensystem.rank]
    return eta / (eta + model.gamma)


def _mode_weight(model: TransformedKernelModel, weight: float | None) -> float:
    if weight is None:
        return 1.0 / model.grid.size
    w = float(weight)
    if not w > 0:
        raise InputError("quadrature weight must be positive")
    return w


def transformed_gram(
    points_a,
    points_b,
    model: TransformedKernelModel,
    weight: float | None = None,
) -> np.ndarray:
    """Transformed-kernel matrix between two point sets.

    Computed as K_ax U diag(1 / (w lam^2 + gamma lam)) U^T K_xb over the
    retained rank, where lam are grid Gram eigenvalues and ``w`` is the
    quadrature weight assigned to each grid point in the eigenvalue
    estimates.  The default ``w = 1/m`` treats the domain as having unit
    volume; pass the grid cell volume to integrate over the true domain.
    """
    w = _mode_weight(model, weight)
    eig = model.eigensystem
    if eig.rank == 0:
        raise DegenerateKernelError("transformed kernel has no retained modes")
    lam = eig.eigenvalues[: eig.rank]
    U = eig.eigenvectors[:, : eig.rank]
    K_ax = gram(points_a, model.grid.points, model.kernel)
    K_xb = gram(model.grid.points, points_b, model.kernel)
    coef = 1.0 / (w * lam * lam + model.gamma * lam)
    return ((K_ax @ U) * coef) @ (U.T @ K_xb)


def nystrom_base_gram(points_a, points_b, model: TransformedKernelModel) -> np.ndarray:
    """Low-rank reconstruction K_ax K_xx^{-1} K_xb of the base kernel matrix.

    Exact (up to jitter) whenever the evaluation points are grid points.
    """
    eig = model.eigensystem
    lam = eig.eigenvalues[: eig.rank]
    U = eig.eigenvectors[:, : eig.rank]
    K_ax = gram(points_a, model.grid.points, model.kernel)
    K_xb = gram(model.grid.points, points_b, model.kernel)
    return ((K_ax @ U) / lam) @ (U.T @ K_xb)
