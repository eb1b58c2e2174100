"""Exception hierarchy shared by all phrasecraft modules.

The CLI maps these onto process exit codes: InvalidArgumentError -> 1,
DataError (and subclasses) -> 2, NumericError -> 3.
"""


class PhrasecraftError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgumentError(PhrasecraftError, ValueError):
    """A caller-supplied value violates an operation's precondition."""


class DataError(PhrasecraftError):
    """Input data is malformed or unusable."""


class ParseError(DataError):
    """A file failed to parse; carries the offending location."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc += f"{path}"
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line


class NotFoundError(DataError):
    """A required item (e.g. a phrase inside a context) is absent."""


class DegenerateInputError(DataError):
    """Input is structurally valid but unusable (e.g. all-stopword phrase)."""


class UndefinedCorrelationError(DataError):
    """Correlation is undefined because one input series is constant."""


class NumericError(PhrasecraftError):
    """A non-finite value surfaced where finite arithmetic was required."""


class UsageError(PhrasecraftError):
    """Command line could not be interpreted."""
