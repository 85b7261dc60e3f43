"""Gradient-free circuit optimization against noisy cost evaluators."""

from .constraints import (
    TWIST_MAX,
    TWIST_MIN,
    Constraints,
    SearchBox,
    box_from_theory,
    project_constraints,
    twist_mask,
)
from .direct import (
    Cell,
    DirectConfig,
    Evaluation,
    OptimizeResult,
    TraceRecord,
    export_trace,
    incumbent_curve,
    load_trace,
    optimize,
    potentially_optimal,
)
from .refine import allocate_refinement, misselection_bound
from .scans import (
    COARSE,
    FINE,
    FineScan,
    IdealEvaluator,
    LabEvaluator,
    coarse_scan,
    constrained_optimizer,
    constrained_theory,
    fine_scan,
)
from .surrogate import PeriodicGP, generator_periods

__all__ = [
    "TWIST_MAX", "TWIST_MIN", "Constraints", "SearchBox", "box_from_theory", "project_constraints",
    "twist_mask", "Cell", "DirectConfig", "Evaluation", "OptimizeResult", "TraceRecord", "export_trace",
    "incumbent_curve", "load_trace", "optimize", "potentially_optimal", "allocate_refinement",
    "misselection_bound", "COARSE", "FINE", "FineScan", "IdealEvaluator", "LabEvaluator", "coarse_scan",
    "constrained_optimizer", "constrained_theory", "fine_scan", "PeriodicGP", "generator_periods",
]
