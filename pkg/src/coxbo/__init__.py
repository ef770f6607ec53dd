"""Gaussian Cox process intensity inference and Bayesian optimization.

The package estimates the latent intensity of an inhomogeneous point
process (posterior mean and covariance on a grid) and drives a sequential
region-acquisition loop over the estimated intensity.
"""

from .acquisition import (
    AcquisitionSpec,
    RunLengthPosterior,
    acq_changepoint,
    acq_cumulative,
    acq_idle,
    acq_ucb,
    changepoint_trace,
    cpd_step,
)
from .bo import BOConfig, BOTrace, Region, candidate_centers, reveal, run_bo
from .inference import (
    DualCoefficients,
    EventSet,
    FitConfig,
    Posterior,
    PriorCovariance,
    fit_map,
    fit_posterior,
    flat_posterior,
    objective,
    objective_gradient,
    posterior_at,
    posterior_covariance,
    prior_covariance,
)
from .kernels import (
    Grid,
    GridEigensystem,
    KernelSpec,
    TransformedKernelModel,
    build_model,
    default_kernel,
    eigendecompose_grid,
    gram,
    kernel_eval,
    nystrom_base_gram,
    nystrom_eigenfunction,
    nystrom_eigenvalues,
    shrinkage_coefficients,
    transformed_gram,
    uniform_grid,
)
from .links import LinkFunction, kappa, kappa_ddot, kappa_dot, kappa_inv
from .metrics import MetricReport, iql, l2_distance
from .pointprocess import (
    IntensityFunction,
    count_probability,
    synthetic_intensity,
    synthetic_intensity_fn,
    thinning_sample,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
