"""Exception hierarchy shared by all modules."""


class BifDetectError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(BifDetectError, ValueError):
    """An argument violates a documented precondition."""


class ConfigurationError(BifDetectError, ValueError):
    """Inconsistent combination of otherwise valid inputs."""


class OrbitDivergenceError(BifDetectError, ArithmeticError):
    """The state left the divergence guard during integration.

    Attributes
    ----------
    time : float
        Integration time (relative to the start of the offending call) at
        which the guard tripped.
    orbit : int or None
        Index of the offending orbit when integrating a batch.
    """

    def __init__(self, time, orbit=None, message=None):
        self.time = float(time)
        self.orbit = orbit
        if message is None:
            where = f"orbit {orbit} " if orbit is not None else ""
            message = f"{where}diverged at t={self.time:.6g}"
        super().__init__(message)


class UnsupportedSpectrumError(BifDetectError, ValueError):
    """Complex or repeated eigenvalues where a real simple spectrum is needed."""


class SpectrumIdentificationError(BifDetectError):
    """A Koopman scan did not expose enough local minima."""


class DatasetError(BifDetectError):
    """Base class for dataset file problems."""


class DatasetParseError(DatasetError, ValueError):
    """Malformed dataset or metadata file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DatasetConsistencyError(DatasetError, ValueError):
    """Metadata and stored states disagree."""


class DomainError(BifDetectError, ValueError):
    """Evaluation requested outside the feasible domain of the objective."""


class DegenerateMapError(BifDetectError, ArithmeticError):
    """The learned map has vanishing mean Jacobian determinant."""


class TuningError(BifDetectError):
    """Every candidate in a hyperparameter search failed.

    Attributes
    ----------
    diagnostics : list
        One entry per attempted candidate describing why it failed.
    """

    def __init__(self, message, diagnostics=()):
        self.diagnostics = list(diagnostics)
        super().__init__(message)
