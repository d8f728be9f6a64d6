"""Exception hierarchy shared by every module of the package."""


class TobitError(Exception):
    """Base class for all errors raised by :mod:`tobit_iht`."""


class InvalidArgumentError(TobitError, ValueError):
    pass


class DataError(TobitError, ValueError):
    """The dataset violates a model invariant (non-finite entry, y below threshold, ...)."""


class SchemaError(DataError):
    pass


class GammaUnidentifiableError(DataError):
    """Every row is censored, so the scale parameter does not enter the likelihood."""


class FoldDegenerateError(DataError):
    def __init__(self, fold, message=None):
        self.fold = fold
        super().__init__(message or f"fold {fold} has no uncensored training rows")


class DivergenceError(TobitError, ArithmeticError):
    """Non-finite objective encountered during a solve."""

    def __init__(self, message, iteration=None, outer_round=None):
        self.iteration = iteration
        self.outer_round = outer_round
        super().__init__(message)


class ProtocolError(TobitError):
    """Malformed message exchanged between coordinator and workers."""


class IncompleteRoundError(ProtocolError):
    pass


class DiagnosticsUnavailableError(TobitError):
    pass
