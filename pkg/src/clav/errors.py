"""Exception hierarchy shared by every structure."""


class ClavError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ClavError, ValueError):
    """Bad input: unknown ids, malformed queries, non-positive times."""


class ParseError(ValidationError):
    """A record in an input file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CapabilityError(ValidationError):
    """The query asks for more than the structure was built to answer."""


class ResourceError(ClavError):
    """A build would exceed a configured size budget."""

    def __init__(self, what, count, budget):
        super().__init__(f"{what}: projected {count} exceeds budget {budget}")
        self.what = what
        self.count = count
        self.budget = budget
