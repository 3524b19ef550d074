"""Exception types shared across the package."""


class DataFormatError(ValueError):
    """A file or record violates one of the on-disk formats."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        loc = ""
        if path is not None:
            loc = f"{path}: " if line is None else f"{path}:{line}: "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class NumericalError(RuntimeError):
    """Training or scoring produced a non-finite value."""
