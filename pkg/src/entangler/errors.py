"""Exception types shared across the package."""


class EntanglerError(Exception):
    """Base class; ``kind`` is the short tag the CLI reports."""

    kind = "error"


class ConfigurationError(EntanglerError, ValueError):
    kind = "config"


class InputError(EntanglerError, ValueError):
    kind = "input"


class ParseError(EntanglerError, ValueError):
    kind = "parse"

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


class UsageError(EntanglerError, RuntimeError):
    kind = "usage"


class TrainingError(EntanglerError, RuntimeError):
    kind = "training"
