"""Exception hierarchy.

Every error carries the module and operation that raised it so the CLI can
report them in a structured way. ``exit_code`` groups errors into the CLI's
exit statuses: 1 usage/config, 2 data, 3 numerical failure.
"""


class FMVMAError(Exception):
    module = "fmvma"
    exit_code = 2

    def __init__(self, message, *, operation=None, datum=None):
        super().__init__(message)
        self.operation = operation
        self.datum = datum

    def to_dict(self):
        return {
            "error": type(self).__name__,
            "module": self.module,
            "operation": self.operation,
            "datum": self.datum,
            "message": str(self),
        }


class InvalidArgumentError(FMVMAError, ValueError):
    pass


class WeightUndefinedError(FMVMAError):
    module = "survival"
    exit_code = 3


class DegenerateSlicingError(FMVMAError):
    module = "screening"
    exit_code = 2


class SingularDesignError(FMVMAError):
    module = "regression"
    exit_code = 3


class LeverageOneError(FMVMAError):
    module = "averaging"
    exit_code = 3


class ConvergenceError(FMVMAError):
    module = "averaging"
    exit_code = 3

    def __init__(self, message, *, last_iterate=None, **kwargs):
        super().__init__(message, **kwargs)
        self.last_iterate = last_iterate


class InfiniteFitError(FMVMAError):
    module = "averaging"
    exit_code = 3


class UndefinedMetricError(FMVMAError):
    module = "simulation"
    exit_code = 3


class UnsupportedOperationError(FMVMAError):
    module = "simulation"
    exit_code = 1


class IngestionError(FMVMAError):
    module = "cli"
    exit_code = 2

    def __init__(self, message, *, row=None, column=None, **kwargs):
        super().__init__(message, **kwargs)
        self.row = row
        self.column = column

    def to_dict(self):
        d = super().to_dict()
        d.update(row=self.row, column=self.column)
        return d


class ConfigError(FMVMAError):
    module = "cli"
    exit_code = 1
