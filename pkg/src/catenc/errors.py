"""Exception hierarchy shared by every catenc module."""


class CatencError(Exception):
    """Base class for all errors raised by catenc."""


class SchemaError(CatencError):
    pass


class ParseError(CatencError):
    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class EmptyInputError(CatencError):
    pass


class SplitError(CatencError):
    pass


class ShapeError(CatencError):
    pass


class ConfigError(CatencError):
    pass


class DivisionByZeroError(CatencError):
    def __init__(self, message, category=None):
        super().__init__(message)
        self.category = category


class FormatError(CatencError):
    pass


class DegenerateTargetError(CatencError):
    pass


class UndefinedMetricError(CatencError):
    pass


class ExperimentError(CatencError):
    """Wraps a module error with the (setting, seed) cell it came from."""

    def __init__(self, setting, seed, cause):
        super().__init__(f"setting={setting!r} seed={seed}: {type(cause).__name__}: {cause}")
        self.setting = setting
        self.seed = seed
        self.cause = cause
