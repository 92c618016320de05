"""Exception hierarchy shared by all modules."""


class InvalidInput(ValueError):
    """An argument violates a documented precondition."""


class DegenerateInput(InvalidInput):
    """Input is structurally valid but carries no usable information."""


class NumericalFailure(RuntimeError):
    """A numerical routine failed to produce a trustworthy result."""


class ConvergenceFailure(NumericalFailure):
    """An iterative solver exhausted its iteration budget.

    Carries the last iterate and residual so callers can inspect or
    restart the computation.
    """

    def __init__(self, message, last_iterate=None, residual=None,
                 iterations=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
        self.iterations = iterations


class UndefinedMetric(InvalidInput):
    """The requested metric is undefined for this input (e.g. one class)."""


class RoutedElsewhere(InvalidInput):
    """The input belongs to a companion routine (soft routing error)."""


class DegenerateEffect(InvalidInput):
    """An effect size is undefined because the differences have no spread."""


class UnsupportedFormat(ValueError):
    """A file does not carry the expected magic or version."""


class CorruptArchive(ValueError):
    """A trial archive violates its byte-level contract.

    ``offset`` locates the first offending byte when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset
