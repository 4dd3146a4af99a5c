class CldError(Exception):
    """Base class of every error raised by the package."""


class ParseError(CldError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ValidationError(CldError):
    pass


class DimensionError(ValidationError):
    pass


class NumericalError(CldError):
    pass


class TrainingError(CldError):
    pass


class ConfigError(CldError):
    pass
