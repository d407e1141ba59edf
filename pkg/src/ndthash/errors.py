"""Exception types shared across the package."""


class NDTHashError(Exception):
    """Base class for all package errors."""


class InvalidArgument(NDTHashError, ValueError):
    pass


class UnsupportedWidth(InvalidArgument):
    """Hashing head wider than the chain enumeration bound."""


class DataError(NDTHashError, ValueError):
    """Malformed input file or label block.

    ``row`` and ``column`` are 1-based file positions when known.
    """

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class LabelKindMismatch(InvalidArgument):
    pass


class Diverged(NDTHashError, RuntimeError):
    """Non-finite loss or gradient during optimisation.

    Carries the last finite state so callers can report or resume.
    """

    def __init__(self, message, iteration=None, state=None, last_loss=None):
        super().__init__(message)
        self.iteration = iteration
        self.state = state
        self.last_loss = last_loss
