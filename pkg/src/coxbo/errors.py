"""Exception taxonomy with machine-readable categories.

The CLI maps any :class:`CoxError` to a nonzero exit status and prints the
``category`` string, so batch harnesses can dispatch on the failure class
without parsing messages.
"""


class CoxError(Exception):
    """Base class for errors raised by this package."""

    category = "internal"


class InputError(CoxError, ValueError):
    """Malformed or inconsistent caller input (shapes, bounds, values)."""

    category = "input"


class DomainError(CoxError, ValueError):
    """Value outside the mathematical domain of the requested operation."""

    category = "domain"


class DegenerateKernelError(CoxError):
    """Kernel Gram matrix carries no usable spectrum."""

    category = "degenerate-kernel"


class OptimizationError(CoxError):
    """Optimizer diverged or produced non-finite objective values."""

    category = "optimization"


class ConditioningError(CoxError):
    """A linear system stayed singular after jitter escalation."""

    category = "conditioning"


class NumericError(CoxError):
    """Probability masses or integrals degenerated numerically."""

    category = "numeric"


class BoundViolationError(CoxError):
    """Dominating rate exceeded by the target intensity during thinning."""

    category = "bound-violation"


class ParseError(CoxError, ValueError):
    """Malformed text input (CSV rows, config lines)."""

    category = "parse"
