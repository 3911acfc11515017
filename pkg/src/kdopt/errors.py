"""Exception types shared across the package."""


class UndefinedRatioError(ValueError):
    """A ratio quantity (beta, rho, lambda*, reduction ratio) has a zero denominator."""


class DivergedError(RuntimeError):
    """An optimizer run produced a non-finite or exploding loss.

    Carries the last finite state and the partial trace collected so far.
    """

    def __init__(self, message, state=None, trace=None):
        super().__init__(message)
        self.state = state
        self.trace = trace if trace is not None else []


class DataFormatError(ValueError):
    """A data file does not follow the expected byte/row layout."""

    def __init__(self, message, offset=None, row=None, column=None):
        super().__init__(message)
        self.offset = offset
        self.row = row
        self.column = column


class ConfigError(ValueError):
    """An experiment config file is missing or has an invalid field."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
