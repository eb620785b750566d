"""Optimal (s, S) investment under fixed and proportional costs for a GBM state."""

from .analytic import GbmPrimitives, build
from .model import ProblemSpec, ValidationReport, validate
from .solver import NeverInvest, PolicyTriple, SolverConfig, solve
from .value import ValueFunction, value_function

__version__ = "0.1.0"

__all__ = [
    "GbmPrimitives",
    "NeverInvest",
    "PolicyTriple",
    "ProblemSpec",
    "SolverConfig",
    "ValidationReport",
    "ValueFunction",
    "build",
    "solve",
    "validate",
    "value_function",
]
