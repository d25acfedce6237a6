"""Exception hierarchy shared by all pnn modules."""


class PNNError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class DomainError(PNNError, ValueError):
    """An argument lies outside the domain of the operation."""

    exit_code = 4


class PrecisionError(PNNError, ArithmeticError):
    """Certified arithmetic could not decide a digit after maximal refinement."""

    exit_code = 5


class UnsupportedSystemError(PNNError):
    """The beta system is not a (detected) Parry number."""

    exit_code = 4


class ModelError(PNNError):
    """A measure failed to admit the finite-memory realization we need."""


class GluingError(PNNError):
    """The language automaton is not strongly connected (no specification)."""


class PolicyError(PNNError):
    """A Gamma family came out empty under the configured epsilon policy."""

    exit_code = 2


class ConstructionError(PNNError):
    """A block set became empty or a structural invariant failed."""

    exit_code = 2


class ScheduleError(PNNError):
    """No admissible n_j was found below the hard cap."""

    exit_code = 3
