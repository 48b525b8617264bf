"""Exception types shared across the package."""


class DataError(ValueError):
    """Malformed or inconsistent input data (bad records, unknown ids, ...)."""


class NumericError(FloatingPointError):
    """A NaN or Inf escaped a numerical kernel."""
