"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument is outside the contract of the operation."""


class ParseError(ParameterError):
    """Input file content could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IncompatibleTableError(RuntimeError):
    """A calibration table does not match the data size or the net it is used with."""
