"""Exception hierarchy shared across the package."""


class StatewalkError(Exception):
    """Base class for all errors raised by statewalk."""


class UnparseableMarkup(StatewalkError):
    """No element structure could be recovered from a page source."""


class MissingSourceState(StatewalkError):
    """An edge was added whose source state is not in the graph."""


class MalformedGraphFile(StatewalkError):
    """A graph file could not be parsed."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + where)


class DriverError(StatewalkError):
    """A single driver call failed; callers may retry."""


class DriverTimeout(DriverError):
    """A driver call exceeded its deadline."""


class DriverUnavailable(StatewalkError):
    """The application driver cannot be reached at all."""


class DriverSessionLost(StatewalkError):
    """The driver session is gone and cannot be recovered."""


class RemoteReasonerUnavailable(StatewalkError):
    """The remote reasoner endpoint did not answer usefully."""


class SpecValidationError(StatewalkError):
    """A SimApp definition failed validation.

    ``errors`` holds every problem found, not just the first one.
    """

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid simapp spec:\n  " + "\n  ".join(self.errors))


class ConfigError(StatewalkError):
    """A config file or value could not be interpreted."""
