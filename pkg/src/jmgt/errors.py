"""Exception hierarchy.

Every error carries the process exit code the command-line runner maps it to,
so library callers and the CLI agree on what a failure means.
"""


class JMGTError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ConfigurationError(JMGTError):
    """Inconsistent or malformed user input (files, flags, parameters)."""

    exit_code = 64


class InvalidKernelError(JMGTError):
    """Memory kernel violates a structural requirement (e.g. tau_g <= 0)."""

    exit_code = 2


class InsufficientDataError(ConfigurationError):
    """Tabulated input with too few samples to interpolate."""


class KernelDomainError(JMGTError):
    """The kernel integral reaches c**2, so the effective speed is not positive."""

    exit_code = 2


class UnsupportedRepresentationError(ConfigurationError):
    """A memory representation was requested that the kernel or state cannot provide."""


class DegenerateModeError(JMGTError):
    """Operation undefined at the zero frequency."""

    exit_code = 64


class NumericOverflowError(JMGTError):
    """Non-finite numbers appeared in a propagated state."""

    exit_code = 3


class BlowUpError(JMGTError):
    """The solution left the admissible range during time stepping."""

    exit_code = 3

    def __init__(self, message, time=None, step=None):
        super().__init__(message)
        self.time = time
        self.step = step


class ResolutionError(JMGTError):
    """Grid or quadrature is too coarse for the requested quantity."""

    exit_code = 64


class RegularityIndexError(ConfigurationError):
    """Sobolev index too small for the requested weighted quantity."""


class FitError(JMGTError):
    """Decay fit impossible (non-positive data, too few samples)."""

    exit_code = 5


class InequalityViolation(JMGTError):
    """A checked energy inequality has negative slack beyond tolerance."""

    exit_code = 4


class CoefficientSelectionError(JMGTError):
    """No admissible Lyapunov coefficients (e.g. no memory in the critical case)."""

    exit_code = 4
