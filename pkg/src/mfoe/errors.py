"""Exception hierarchy shared by the library and the CLI."""


class MfoeError(Exception):
    pass


class DomainError(MfoeError, ValueError):
    """Input outside the domain of an operation (non-finite, wrong shape, ...)."""


class ConfigurationError(MfoeError, ValueError):
    """Model or experiment configuration violates an invariant."""


class ParseError(ConfigurationError):
    """A serialized model or array file is malformed."""


class NumericFailure(MfoeError, ArithmeticError):
    """An iterative method produced a non-finite value."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration
