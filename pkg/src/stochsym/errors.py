"""Exception types shared across the library.

The CLI maps these onto exit codes: ConfigError -> 2, NumericError and its
kin -> 3, failed checks (no exception) -> 1.
"""


class StochsymError(Exception):
    """Base class for library errors."""


class DomainError(StochsymError):
    """A point or path node lies outside the SDE's open domain."""


class NumericError(StochsymError):
    """A computation produced NaN/Inf or an otherwise unusable value."""


class RangeError(StochsymError):
    """A time or clock query outside the stored range."""


class HorizonError(StochsymError):
    """A requested clock time exceeds the simulated horizon."""


class ConfigError(StochsymError):
    """Invalid user-facing configuration (unknown model, bad parameter)."""


class ReliabilityError(StochsymError):
    """An estimate is unusable (rejection rate above cap, empty sample)."""


class SingularMapError(StochsymError):
    """A numeric inversion failed to converge (map not invertible there)."""


class DegenerateWeightsWarning(UserWarning):
    """Importance weights have collapsed (effective sample size too small)."""
