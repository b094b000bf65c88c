"""Exception hierarchy shared by every module."""


class PrivfError(Exception):
    """Base class for all errors raised by privf."""


class InvalidDistributionError(PrivfError, ValueError):
    """A probability table has negative entries or does not sum to one."""


class AlphabetMismatchError(PrivfError, ValueError):
    """Two objects that must share an alphabet do not."""


class UnknownLabelError(PrivfError, KeyError):
    """A label was not found in its alphabet."""

    def __init__(self, label, where="alphabet"):
        self.label = label
        super().__init__(f"unknown label {label!r} in {where}")

    def __str__(self):
        return self.args[0]


class InfeasibleMappingError(PrivfError, ValueError):
    """A mapping puts probability mass on a forbidden (infinite-cost) pair."""


class InfeasibleDistortionError(PrivfError, ValueError):
    """The distortion budget is below the smallest achievable distortion."""

    def __init__(self, delta, min_distortion):
        self.delta = delta
        self.min_distortion = min_distortion
        super().__init__(
            f"distortion budget {delta:g} is below the minimum achievable "
            f"distortion {min_distortion:g}"
        )


class PreconditionError(PrivfError, ValueError):
    """An operation was called outside its domain of validity."""

    def __init__(self, message, value=None):
        self.value = value
        super().__init__(message)


class ProblemTooLargeError(PrivfError, ValueError):
    """The optimization has more variables than the configured cap."""

    def __init__(self, n_vars, cap):
        self.n_vars = n_vars
        self.cap = cap
        super().__init__(
            f"problem has {n_vars} variables, above the cap of {cap}; "
            "quantize the public alphabet first"
        )


class ConfigError(PrivfError, ValueError):
    """A run configuration is malformed."""


class DataFormatError(PrivfError, ValueError):
    """An input file is malformed or lacks a required column."""
