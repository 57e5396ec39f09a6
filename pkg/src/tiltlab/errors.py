class TiltlabError(Exception):
    pass


class DimensionError(TiltlabError, ValueError):
    pass


class NotExactError(TiltlabError):
    """Raised when no exact rule of the function class covers the request."""


class EmptySetError(TiltlabError, ValueError):
    pass


class BudgetError(TiltlabError):
    pass


class DomainError(TiltlabError, ValueError):
    """Point outside dom f, or direction outside dom df."""


class EnumerationError(TiltlabError):
    pass


class UnboundedError(TiltlabError):
    pass


class ParseError(TiltlabError, ValueError):
    pass


class ConfigError(TiltlabError, ValueError):
    """Invalid experiment config; `violations` holds (JSON pointer, message) pairs."""

    def __init__(self, message: str, violations=()):
        super().__init__(message)
        self.violations = list(violations)
