"""Exception types shared by all modules."""


class MepQlabError(Exception):
    """Base class for library errors."""


class ValidationError(MepQlabError, ValueError):
    """An input violates a documented precondition."""


class NumericalError(MepQlabError, ArithmeticError):
    """A numerical procedure failed to meet its tolerance."""


class ConfigError(MepQlabError, ValueError):
    """An experiment configuration could not be parsed or is inconsistent."""
