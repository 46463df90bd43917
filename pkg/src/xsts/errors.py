"""Exception types raised across the package."""
import numpy as np


class XstsError(Exception):
    """Base class for package errors."""


class RegimeError(XstsError, ValueError):
    """Operation called on a factor path of the wrong regime."""


class DomainError(XstsError, ValueError):
    """Argument outside the admissible domain."""


class AlignmentError(XstsError, ValueError):
    """Panel periods not covered by the factor window."""


class DimensionError(XstsError, ValueError):
    """Parameter or data dimensions are inconsistent."""


class SingularityError(XstsError, np.linalg.LinAlgError):
    """A matrix that must be inverted is singular or numerically so.

    ``cond`` carries the condition number when one is available.
    """

    def __init__(self, msg, cond=None):
        super().__init__(msg)
        self.cond = cond


class ConfigError(XstsError, ValueError):
    """Invalid study / CLI / procedure configuration."""


class NotPSDError(XstsError, ValueError):
    """Covariance input is not positive semidefinite within tolerance."""
