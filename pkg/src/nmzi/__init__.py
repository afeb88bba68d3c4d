"""Cascaded nonlinear Mach-Zehnder interferometers in a truncated Fock space."""
from nmzi.analytics import (
    NoSolutionError,
    approx_g2,
    extraction_asymptote,
    optimal_condition,
    optimal_params,
)
from nmzi.circuit import CircuitFile, CircuitSpec, SimpleNmziParams, Simulator, SpecFormatError, run
from nmzi.fock import CutoffError, ElementParams, FockCutoff, TwoModeState
from nmzi.kernels import BACKEND
from nmzi.observables import ObservableReport, UndefinedG2Error, reduce_to_mode_a, report
from nmzi.optimizer import (
    Constraint,
    InfeasibleError,
    Objective,
    OptimizationProblem,
    OptimizationResult,
    optimize,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CircuitFile",
    "CircuitSpec",
    "Constraint",
    "CutoffError",
    "ElementParams",
    "FockCutoff",
    "InfeasibleError",
    "NoSolutionError",
    "Objective",
    "ObservableReport",
    "OptimizationProblem",
    "OptimizationResult",
    "SimpleNmziParams",
    "Simulator",
    "SpecFormatError",
    "TwoModeState",
    "UndefinedG2Error",
    "approx_g2",
    "extraction_asymptote",
    "optimal_condition",
    "optimal_params",
    "optimize",
    "reduce_to_mode_a",
    "report",
    "run",
    "__version__",
]
