"""Exception and warning types shared across the package."""


class MixestError(Exception):
    """Base class for all package errors."""


class InvalidInputError(MixestError, ValueError):
    """An argument has the wrong shape, is non-finite, or is out of domain."""


class DomainError(InvalidInputError):
    """A point lies outside the domain of a mirror map."""


class ConfigError(MixestError, ValueError):
    """A configuration value is invalid or cannot be resolved."""


class NumericError(MixestError, ArithmeticError):
    """A numerical computation produced an unusable value."""


class InvalidStateError(MixestError, RuntimeError):
    """A model was used before it held enough data."""


class DegenerateFitError(MixestError, RuntimeError):
    """A fitting procedure had no finite candidate to choose from."""


class DegenerateDictionaryWarning(RuntimeWarning):
    """The dictionary's Hessian is (numerically) singular."""


class OutputError(MixestError, OSError):
    """The output directory cannot be created or written."""


class TrialError(MixestError, RuntimeError):
    """A trial failed; names the trial and the spec that raised."""

    def __init__(self, trial: int, spec: str, cause: Exception):
        self.trial = trial
        self.spec = spec
        self.cause = cause
        super().__init__(f"trial {trial}: {spec} failed with {type(cause).__name__}: {cause}")
