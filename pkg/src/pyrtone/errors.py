"""Exception types shared across the package."""


class PyrtoneError(Exception):
    """Base class for package errors."""


class ParseError(PyrtoneError):
    """A file failed to parse; carries the byte offset of the problem."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class DegenerateInputError(PyrtoneError):
    """Input lacks the variation an operation requires (e.g. constant image)."""
