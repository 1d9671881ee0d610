"""Exception types shared across the package."""


class PestovLabError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(PestovLabError, ValueError):
    """A chart point or trajectory left the domain of its chart."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class DegenerateInputError(PestovLabError, ValueError):
    pass


class UnsupportedOrderError(PestovLabError, ValueError):
    pass


class UnsupportedModelError(PestovLabError, ValueError):
    pass


class PreconditionError(PestovLabError, ValueError):
    pass


class DataError(PestovLabError, ValueError):
    """Non-finite integrand values; ``index`` names the offending sample."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConfigError(PestovLabError, ValueError):
    def __init__(self, message, key=None, line=None):
        super().__init__(message)
        self.key = key
        self.line = line
