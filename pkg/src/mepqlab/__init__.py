"""Finite-dimensional quantum workbench: maximum-entropy packets, oscillator
chains, POV measures, locality on grids and premeasurement models."""

from .errors import ConfigError, MepQlabError, NumericalError, ValidationError

__version__ = "0.1.0"

__all__ = ["ConfigError", "MepQlabError", "NumericalError", "ValidationError", "__version__"]
