"""Exception types raised across the package."""


class MlsgError(Exception):
    """Base class for every error raised by mlsgnn."""


class DataError(MlsgError, ValueError):
    """Input data is malformed or inconsistent."""


class ParseError(DataError):
    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


class BoundsError(DataError):
    pass


class LabelError(DataError):
    pass


class InsufficientLabelsError(DataError):
    pass


class DegenerateFeatureError(DataError):
    def __init__(self, node, message=None):
        self.node = int(node)
        super().__init__(message or f"node {node} has an all-zero feature row")


class EmptyFrequencyError(DataError):
    pass


class DomainError(MlsgError, ValueError):
    """A parameter lies outside the domain of the operation."""


class DimensionError(MlsgError, ValueError):
    pass


class NumericError(MlsgError, ArithmeticError):
    def __init__(self, message, epoch=None, layer=None):
        self.epoch = epoch
        self.layer = layer
        super().__init__(message)


class StateError(MlsgError, RuntimeError):
    pass


class IntegrityError(MlsgError, ValueError):
    pass


class ConfigError(MlsgError, ValueError):
    pass
