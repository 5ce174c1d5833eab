"""Exception hierarchy. Each family maps onto one CLI exit code."""


class GraphADError(Exception):
    exit_code = 1


class ConfigError(GraphADError):
    exit_code = 2


class DataError(GraphADError):
    exit_code = 3


class FormatError(DataError):
    """A mandatory dataset file is missing or malformed."""


class IntegrityError(DataError):
    """Dataset files disagree with each other (e.g. a dangling node index)."""


class ProtocolError(DataError):
    """The dataset cannot support the evaluation protocol."""


class ShapeError(GraphADError, ValueError):
    pass


class StateError(GraphADError, RuntimeError):
    """An operation was called before its prerequisites (e.g. scoring an untrained model)."""


class UndefinedMetricError(GraphADError, ValueError):
    pass


class NumericalAbort(GraphADError, FloatingPointError):
    exit_code = 4

    def __init__(self, message, epoch=None, batch=None, terms=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.terms = terms or {}

    def __str__(self):
        base = super().__str__()
        return f"{base} (epoch={self.epoch}, batch={self.batch}, terms={self.terms})"
