class HpgnnError(Exception):
    """Base class for all errors raised by this package."""


class GraphParseError(HpgnnError, ValueError):
    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


class DimensionError(HpgnnError, ValueError):
    pass


class MissingDataError(HpgnnError, ValueError):
    pass


class CliqueLimitError(HpgnnError, RuntimeError):
    pass


class ConvergenceError(HpgnnError, RuntimeError):
    def __init__(self, message, source=None, residual_sum=None):
        self.source = source
        self.residual_sum = residual_sum
        super().__init__(message)


class NumericError(HpgnnError, FloatingPointError):
    def __init__(self, message, group=None):
        self.group = group
        super().__init__(message)


class DivergenceError(HpgnnError, RuntimeError):
    pass


class StratificationError(HpgnnError, ValueError):
    pass


class StageError(HpgnnError, RuntimeError):
    """A pipeline stage failed; ``stage`` names it, ``__cause__`` holds the reason."""

    def __init__(self, stage, cause):
        self.stage = stage
        super().__init__(f"stage '{stage}' failed: {cause}")
