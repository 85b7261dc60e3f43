"""Variational Ramsey interferometry on the Dicke manifold.

Simulation of twisting-and-rotation circuits, Bayesian cost functions and
bounds, the optimal quantum interferometer, gradient-free circuit
optimization against noisy evaluators and a finite-shot sensor emulator.
"""

__version__ = "0.1.0"

from .circuits import CircuitParams, LayerAngles, css, outcome_table
from .errors import (
    ConvergenceFailure,
    DegenerateDistribution,
    EvaluatorFailure,
    InsufficientData,
    InvalidArgument,
    NoInformation,
    UndefinedOrientation,
)
from .metrology import Prior, circuit_cost, hl_bmse, psl_bmse, sql_bmse
from .oqi import oqi_bound, oqi_curve, oqi_minimum
from .theory import IdealCost, optimize_theory

__all__ = [
    "__version__", "CircuitParams", "LayerAngles", "css", "outcome_table", "ConvergenceFailure",
    "DegenerateDistribution", "EvaluatorFailure", "InsufficientData", "InvalidArgument", "NoInformation",
    "UndefinedOrientation", "Prior", "circuit_cost", "hl_bmse", "psl_bmse", "sql_bmse", "oqi_bound",
    "oqi_curve", "oqi_minimum", "IdealCost", "optimize_theory",
]
