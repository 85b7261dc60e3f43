"""Coarse and fine cost scans, and evaluators that plug into the optimizer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..circuits import CircuitParams
from ..errors import EvaluatorFailure, InvalidArgument
from ..lab import NoiseModel, ScanSpec, cost_from_histograms, design_slope, node_plan, sample_table
from ..metrology import CostReport, Prior, fit_experimental_cost
from ..theory import IdealCost, TheoryResult, local_polish, optimize_theory
from .constraints import Constraints, project_constraints, twist_mask
from .direct import Evaluation

COARSE = ScanSpec(nodes=10, shots=100, scheme="half-hermite")
FINE = ScanSpec(nodes=21, shots=250, scheme="simpson")


def _retrying(fn, retries):
    for attempt in range(retries + 1):
        try:
            return fn()
        except EvaluatorFailure:
            if attempt == retries:
                raise


def coarse_scan(params: CircuitParams, n: int, prior_width: float, slope: float,
                spec: ScanSpec = COARSE, noise: NoiseModel | None = None, rng=None,
                retries: int = 2) -> Evaluation:
    """Cost from the non-negative Hermite nodes only, mirrored by symmetry."""
    if spec.scheme not in ("half-hermite", "hermite"):
        raise InvalidArgument("coarse scans use Hermite node placement")
    phases, weights = node_plan(prior_width, spec)
    counts = _retrying(lambda: sample_table(params, n, phases, spec.shots, noise, rng), retries)
    cost, var, _, _ = cost_from_histograms(counts, phases, weights, slope)
    return Evaluation(cost, var, spec.total_shots)


@dataclass(frozen=True)
class FineScan:
    phases: np.ndarray
    mse: np.ndarray
    mse_error: np.ndarray
    report: CostReport
    shots: int


def fine_scan(params: CircuitParams, n: int, prior_width: float, spec: ScanSpec = FINE,
              noise: NoiseModel | None = None, rng=None, retries: int = 2) -> FineScan:
    """Both-sided scan; MSE curve at the fitted offset and Simpson cost with free slope."""
    if spec.scheme != "simpson":
        raise InvalidArgument("fine scans use a uniform Simpson grid")
    phases, _ = node_plan(prior_width, spec)
    counts = _retrying(lambda: sample_table(params, n, phases, spec.shots, noise, rng), retries)
    fit = fit_experimental_cost(counts, phases, Prior(prior_width))
    ones = np.ones(phases.size)
    _, _, mse, var = cost_from_histograms(counts, phases - fit.offset, ones, fit.slope)
    return FineScan(phases - fit.offset, mse, np.sqrt(var), fit.report, spec.total_shots)


class IdealEvaluator:
    """Exact cost, no sampling noise.  Each call is booked as ``nominal_shots``."""

    def __init__(self, n: int, shape, prior_width: float, nodes: int = 64, form: str = "canonical",
                 nominal_shots: int = COARSE.total_shots):
        self.cost = IdealCost(n, shape, prior_width, nodes=nodes, form=form)
        self.nominal_shots = int(nominal_shots)

    def __call__(self, x, shots=None) -> Evaluation:
        return Evaluation(float(self.cost(x)), 0.0, self.nominal_shots if shots is None else int(shots))


class LabEvaluator:
    """Coarse scans on the emulated device with a fixed estimator slope.

    A refinement request for ``shots`` repeats the coarse scan as many whole
    times as needed.
    """

    def __init__(self, n: int, shape, prior_width: float, slope: float, noise: NoiseModel | None = None,
                 spec: ScanSpec = COARSE, form: str = "experimental", seed: int = 0):
        self.n = n
        self.shape = tuple(shape)
        self.prior_width = prior_width
        self.slope = slope
        self.noise = NoiseModel() if noise is None else noise
        self.spec = spec
        self.form = form
        self.rng = np.random.default_rng(seed)
        self.nominal_shots = spec.total_shots

    def __call__(self, x, shots=None) -> Evaluation:
        params = CircuitParams.from_vector(self.shape, x, self.form)
        reps = 1 if shots is None else max(1, -(-int(shots) // self.spec.total_shots))
        evs = [coarse_scan(params, self.n, self.prior_width, self.slope, self.spec, self.noise, self.rng)
               for _ in range(reps)]
        cost = float(np.mean([e.cost for e in evs]))
        var = float(np.sum([e.variance for e in evs])) / reps**2
        return Evaluation(cost, var, reps * self.spec.total_shots)


def constrained_theory(n: int, shape, prior_width: float, constraints: Constraints | None = None,
                       starts: int = 60, seed: int = 0, form: str = "canonical", x0=None,
                       nodes: int = 64) -> TheoryResult:
    """Noise-free optimum inside the twisting window ``{0} U [twist_min, twist_max]``.

    Optimizes with twists in ``[0, twist_max]``, projects onto the window, then
    re-polishes with dropped twists frozen and kept twists bounded to the window.
    """
    c = Constraints() if constraints is None else constraints
    shape = tuple(shape)
    mask = twist_mask(shape)
    bounds = [(0.0, c.twist_max) if t else (None, None) for t in mask]
    raw = optimize_theory(n, shape, prior_width, starts=starts, seed=seed, bounds=bounds, form=form, x0=x0,
                          nodes=nodes)
    x = project_constraints(raw.params.to_vector(), shape, c)
    cost = IdealCost(n, shape, prior_width, nodes=nodes, form=form)
    dropped = mask & (x == 0)
    polish_bounds = [(c.twist_min, c.twist_max) if t else (None, None) for t in mask]
    x, value = local_polish(cost, x, polish_bounds, fixed=dropped)
    x = project_constraints(x, shape, c)
    value = cost(x)
    params = CircuitParams.from_vector(shape, x, form)
    return TheoryResult(params, float(value), cost.slope(x), prior_width, n)


def constrained_optimizer(constraints: Constraints | None = None):
    """:func:`constrained_theory` with the call signature of ``optimize_theory`` (``bounds`` is ignored)."""

    def run(n, shape, prior_width, *, starts=24, seed=0, x0=None, nodes=64, form="canonical", bounds=None):
        return constrained_theory(n, shape, prior_width, constraints, starts=starts, seed=seed, form=form,
                                  x0=x0, nodes=nodes)

    return run
