"""Multivariate fields-of-experts regularization for variational imaging."""

from .errors import ConfigurationError, DomainError, NumericFailure, ParseError
from .filterbank import FilterBank
from .potentials import PotentialGroup
from .regularizer import MfoeModel
from .solver import SolveConfig, SolveReport, denoise, solve

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DomainError",
    "FilterBank",
    "MfoeModel",
    "NumericFailure",
    "ParseError",
    "PotentialGroup",
    "SolveConfig",
    "SolveReport",
    "denoise",
    "solve",
]
