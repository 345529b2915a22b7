"""Exception taxonomy shared across the package.

ValueError subclasses mark bad inputs (CLI exit code 2); EstimationError subclasses
mark numerical failures of the estimators (CLI exit code 3).
"""


class CapacityError(ValueError):
    """A size limit was exceeded (enumeration width, dataset side length, ...)."""


class ConfigError(ValueError):
    """Configuration file or CLI arguments are invalid."""


class FormatError(ValueError):
    """An artifact file is malformed; message names the offending line."""


class EstimationError(RuntimeError):
    """Base class for numerical failures of estimators."""


class InsufficientOverlapError(EstimationError):
    """Fewer than two energy bins are populated in both histograms."""


class NonPhysicalEstimateError(EstimationError):
    """An estimator produced a non-positive temperature."""


class SaturationError(EstimationError):
    """A magnetization hit +-1, so atanh diverges."""


class ConvergenceError(EstimationError):
    """An iterative solver exhausted its iteration budget."""


class DegenerateLandscapeError(EstimationError):
    """The objective is flat (all local fields zero); no maximizer exists."""


class DegenerateWeightsError(EstimationError):
    """All importance weights underflowed to zero."""
