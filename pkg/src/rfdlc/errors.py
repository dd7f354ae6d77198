"""Exception hierarchy. Each family maps to a CLI exit code."""


class RfdlcError(Exception):
    exit_code = 1


class ConfigError(RfdlcError, ValueError):
    exit_code = 2


class DataError(RfdlcError, ValueError):
    exit_code = 3


class NumericError(RfdlcError, ArithmeticError):
    exit_code = 4


class InvalidDimensionError(ConfigError):
    pass


class InvalidPenaltyError(ConfigError):
    pass


class PenaltyConflictError(ConfigError):
    pass


class InfeasibleImbalanceError(ConfigError):
    pass


class SingularWeightError(ConfigError):
    pass


class NormalizationError(DataError):
    pass


class InconsistentCountsError(DataError):
    pass


class UndefinedRateError(DataError):
    """Raised when a rate has an empty denominator; never coerced to 0."""


class NumericOverflowError(NumericError):
    pass


class DivergenceError(NumericError):
    def __init__(self, epoch, batch, value):
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.value = value
