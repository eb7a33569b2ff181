"""Exception types raised across the package."""


class QCDSError(Exception):
    """Base class for all package errors."""


class ConfigurationError(QCDSError, ValueError):
    pass


class WiringError(QCDSError, ValueError):
    pass


class ComparisonError(QCDSError, ValueError):
    pass


class TilingError(QCDSError, ValueError):
    pass


class DesignParseError(QCDSError, ValueError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)


class DatasetParseError(QCDSError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(message + where)


class IngestionError(QCDSError, ValueError):
    pass


class LabelError(QCDSError, ValueError):
    pass


class EvaluationError(QCDSError, ValueError):
    pass


class FittingError(QCDSError, RuntimeError):
    pass


class PlotError(QCDSError, ValueError):
    pass
