"""Finite-shot sensor emulator and the detuning-reconstruction experiment."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .circuits import CircuitParams, outcome_table
from .errors import EvaluatorFailure, InvalidArgument
from .metrology import CostReport, Prior, fit_experimental_cost, optimal_linear_slope, gauss_hermite
from .spin import projections

BATCH = 50


@dataclass(frozen=True)
class NoiseModel:
    twist_scale: float = 1.0
    rotation_offset: float = 0.0
    rotation_skip_threshold: float = 0.0
    flicker_bandwidth: float = 0.0
    flicker_exponent: float = 1.0
    refreeze_probability: float = 0.0
    max_retries: int = 20
    detuning_twist_error: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if not self.twist_scale > 0:
            raise InvalidArgument("twist_scale must be positive")
        if not 0 <= self.refreeze_probability <= 1:
            raise InvalidArgument("refreeze probability must lie in [0, 1]")
        if self.rotation_skip_threshold < 0 or self.flicker_bandwidth < 0:
            raise InvalidArgument("thresholds and bandwidths must be non-negative")
        if not 0 < self.flicker_exponent <= 2:
            raise InvalidArgument("flicker exponent must lie in (0, 2]")
        if self.max_retries < 0:
            raise InvalidArgument("max_retries must be non-negative")

    @property
    def is_ideal(self) -> bool:
        return (self.twist_scale == 1.0 and self.rotation_offset == 0.0
                and self.rotation_skip_threshold == 0.0 and self.detuning_twist_error == 0.0)

    def flicker_width(self, ramsey_time: float) -> float:
        """Standard deviation of the laser phase picked up during one interrogation."""
        if self.flicker_bandwidth == 0:
            return 0.0
        return float((self.flicker_bandwidth * ramsey_time) ** (self.flicker_exponent / 2))


def implemented_params(params: CircuitParams, noise: NoiseModel, detuning: float = 0.0) -> CircuitParams:
    """Gate angles actually applied by an imperfect device."""
    if noise.is_ideal:
        return params
    x = params.to_vector()
    twist = params.is_twist()
    scale = noise.twist_scale * (1.0 + noise.detuning_twist_error * abs(detuning))
    x[twist] *= scale
    rot = ~twist
    nonzero = rot & (x != 0)
    x[nonzero] += noise.rotation_offset
    x[rot & (np.abs(x) < noise.rotation_skip_threshold)] = 0.0
    return params.with_vector(x)


def _rng(rng, noise: NoiseModel):
    if rng is not None:
        return rng
    return np.random.default_rng(noise.seed)


def draw_counts(probs, shots: int, rng, refreeze_probability: float = 0.0, max_retries: int = 20):
    """Multinomial counts drawn in 50-shot batches; a refrozen batch is discarded and redrawn.

    Returns ``(counts, discarded_shots)``.
    """
    if shots < 1:
        raise InvalidArgument("shots must be at least 1")
    p = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    p = p / p.sum()
    counts = np.zeros(p.size, dtype=np.int64)
    discarded = 0
    remaining = int(shots)
    while remaining > 0:
        size = min(BATCH, remaining)
        for attempt in range(max_retries + 1):
            batch = rng.multinomial(size, p)
            if refreeze_probability == 0 or rng.random() >= refreeze_probability:
                break
            discarded += size
        else:
            raise EvaluatorFailure(f"crystal refroze {max_retries + 1} times in a row")
        counts += batch
        remaining -= size
    return counts, discarded


def sample_outcomes(params: CircuitParams, n: int, phase: float, shots: int,
                    noise: NoiseModel | None = None, rng=None) -> np.ndarray:
    """Histogram over ``m = -N/2..N/2`` (index ``k`` = excitations) of ``shots`` projective measurements."""
    noise = NoiseModel() if noise is None else noise
    rng = _rng(rng, noise)
    table = outcome_table(implemented_params(params, noise), n, [phase])
    counts, _ = draw_counts(table.probs[0], shots, rng, noise.refreeze_probability, noise.max_retries)
    return counts


def sample_table(params: CircuitParams, n: int, phases, shots, noise: NoiseModel | None = None,
                 rng=None) -> np.ndarray:
    """Histograms at several phases (rows follow the order of ``phases``)."""
    noise = NoiseModel() if noise is None else noise
    rng = _rng(rng, noise)
    phases = np.atleast_1d(np.asarray(phases, dtype=float))
    shots = np.broadcast_to(np.asarray(shots, dtype=int), phases.shape)
    table = outcome_table(implemented_params(params, noise), n, phases)
    # outcome_table sorts its rows; map back to the requested order
    order = np.argsort(phases, kind="stable")
    probs = np.empty_like(table.probs)
    probs[order] = table.probs
    out = np.empty((phases.size, n + 1), dtype=np.int64)
    for i in range(phases.size):
        out[i], _ = draw_counts(probs[i], int(shots[i]), rng, noise.refreeze_probability, noise.max_retries)
    return out


# ---------------------------------------------------------------------------
# cost estimates from histograms


@dataclass(frozen=True)
class ScanSpec:
    """Phase sampling plan.

    ``half-hermite``: the non-negative nodes of a ``2 * nodes`` Gauss-Hermite
    rule, mirrored through the symmetry of the MSE.  ``hermite``: a full rule
    on both sides.  ``simpson``: a uniform odd grid over ``+-span`` prior widths,
    analysed with a free slope and offset.
    """

    nodes: int = 10
    shots: int = 100
    scheme: str = "half-hermite"
    span: float = 3.0

    def __post_init__(self):
        if self.scheme not in ("half-hermite", "hermite", "simpson"):
            raise InvalidArgument(f"unknown scan scheme {self.scheme!r}")
        if self.nodes < 1 or self.shots < 1:
            raise InvalidArgument("nodes and shots must be positive")
        if self.scheme == "simpson" and (self.nodes < 3 or self.nodes % 2 == 0):
            raise InvalidArgument("simpson scans need an odd number (>= 3) of nodes")

    @property
    def total_shots(self) -> int:
        return self.nodes * self.shots


def node_plan(prior_width: float, spec: ScanSpec):
    """Phases to measure and the quadrature weights attached to them."""
    if spec.scheme == "half-hermite":
        quad = gauss_hermite(prior_width, 2 * spec.nodes)
        pos = quad.phases > 0
        return quad.phases[pos], 2.0 * quad.weights[pos]
    if spec.scheme == "hermite":
        quad = gauss_hermite(prior_width, spec.nodes)
        return quad.phases, quad.weights
    grid = np.linspace(-spec.span * prior_width, spec.span * prior_width, spec.nodes)
    return grid, None


def cost_from_histograms(counts, phases, weights, slope: float):
    """Quadrature cost of ``phi_est = slope * m`` and the variance of that estimate."""
    counts = np.asarray(counts, dtype=float)
    n = counts.shape[1] - 1
    m = projections(n)
    shots = counts.sum(axis=1)
    err2 = (np.asarray(phases)[:, None] - slope * m[None, :]) ** 2
    mean = (counts * err2).sum(axis=1) / shots
    second = (counts * err2**2).sum(axis=1) / shots
    var_node = np.maximum(second - mean**2, 0.0) * shots / np.maximum(shots - 1, 1) / shots
    cost = float(weights @ mean)
    variance = float((weights**2) @ var_node)
    return cost, variance, mean, var_node


def design_slope(params: CircuitParams, n: int, prior_width: float, nodes: int = 64) -> float:
    """Optimal linear slope of the ideal circuit (held fixed during measurements)."""
    quad = gauss_hermite(prior_width, nodes)
    return optimal_linear_slope(outcome_table(params, n, quad.phases), quad)


def empirical_cost(params: CircuitParams, n: int, prior, spec: ScanSpec | None = None,
                   noise: NoiseModel | None = None, rng=None, slope: float | None = None) -> CostReport:
    """Cost estimated from simulated histograms.

    Hermite schemes keep the slope fixed (default: the ideal circuit's optimal
    slope) so the estimate is unbiased; the Simpson scheme fits slope and phase
    offset to the data.
    """
    prior = prior if isinstance(prior, Prior) else Prior(float(prior))
    spec = ScanSpec() if spec is None else spec
    noise = NoiseModel() if noise is None else noise
    rng = _rng(rng, noise)
    phases, weights = node_plan(prior.width, spec)
    counts = sample_table(params, n, phases, spec.shots, noise, rng)
    if spec.scheme == "simpson":
        return fit_experimental_cost(counts, phases, prior, slope=slope).report
    a = design_slope(params, n, prior.width) if slope is None else slope
    cost, var, _, _ = cost_from_histograms(counts, phases, weights, a)
    return CostReport(cost, prior.width, "linear", a, 0.0,
                      {"scheme": spec.scheme, "nodes": spec.nodes, "shots": spec.shots, "variance": var})


# ---------------------------------------------------------------------------
# detuning reconstruction


TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class FreqExperimentConfig:
    n_particles: int = 12
    css_params: CircuitParams = field(default_factory=lambda: CircuitParams(form="experimental"))
    optimized_params: CircuitParams | None = None
    design_width: float = 0.6893
    detuning_spread: float = TWO_PI * 40.0
    truncation: float = 2.0
    samples_per_time: int = 200
    shots_per_sample: int = 50
    ramsey_times: tuple = (1e-3, 2e-3, 3e-3, 4e-3, 5e-3, 6e-3)
    drift_time: float = 15e-3
    drift_shots: int = 50
    bootstrap: int = 200

    def __post_init__(self):
        if self.n_particles < 1:
            raise InvalidArgument("need at least one particle")
        positive = ("design_width", "detuning_spread", "samples_per_time", "shots_per_sample",
                    "drift_time", "drift_shots", "bootstrap")
        for name in positive:
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be positive")
        if self.truncation < 1:
            raise InvalidArgument("truncation must be at least one spread")
        if not self.ramsey_times or min(self.ramsey_times) <= 0:
            raise InvalidArgument("Ramsey times must be positive")
        object.__setattr__(self, "ramsey_times", tuple(float(t) for t in self.ramsey_times))

    def sequences(self):
        out = {"css": self.css_params}
        if self.optimized_params is not None:
            out["optimized"] = self.optimized_params
        return out


def truncated_normal(rng, scale: float, limit: float, size: int) -> np.ndarray:
    """Zero-mean normal samples restricted to ``|x| <= limit`` by rejection."""
    out = np.empty(0)
    while out.size < size:
        draw = rng.normal(0.0, scale, size=2 * (size - out.size) + 8)
        out = np.concatenate([out, draw[np.abs(draw) <= limit]])
    return out[:size]


@dataclass(frozen=True)
class FreqPoint:
    ramsey_time: float
    sequence: str
    std: float
    bootstrap_error: float
    theory: float
    n_estimates: int


@dataclass
class FreqExperimentResult:
    points: list
    records: list = field(repr=False, default_factory=list)

    def curve(self, sequence: str):
        pts = [p for p in self.points if p.sequence == sequence]
        return (np.array([p.ramsey_time for p in pts]), np.array([p.std for p in pts]),
                np.array([p.bootstrap_error for p in pts]), np.array([p.theory for p in pts]))


def _truncated_nodes(width, limit_sd, nodes=201):
    """Simpson weights for a normal of ``width`` truncated at ``limit_sd`` widths."""
    grid = np.linspace(-limit_sd * width, limit_sd * width, nodes)
    from .metrology import simpson_weights

    w = simpson_weights(grid) * np.exp(-0.5 * (grid / width) ** 2)
    return grid, w / w.sum()


def frequency_theory(config: FreqExperimentConfig, params: CircuitParams, slope: float,
                     ramsey_time: float, noise: NoiseModel | None = None) -> float:
    """Predicted std of the detuning error for single-shot linear estimates.

    Averages the MSE over the truncated detuning distribution (plus laser phase
    noise, if any) and adds the variance of the drift-correction reference.
    """
    noise = NoiseModel() if noise is None else noise
    n = config.n_particles
    m = projections(n)
    grid, w = _truncated_nodes(config.detuning_spread * ramsey_time, config.truncation)
    flick = noise.flicker_width(ramsey_time)
    if flick > 0:
        extra = gauss_hermite(flick, 16)
        phases = (grid[:, None] + extra.phases[None, :]).ravel()
        weights = (w[:, None] * extra.weights[None, :]).ravel()
        truth = np.repeat(grid, extra.phases.size)
    else:
        phases, weights, truth = grid, w, grid
    probs = _probs_unsorted(implemented_params(params, noise), n, phases)
    err2 = (slope * m[None, :] - truth[:, None]) ** 2
    mse = weights @ (probs * err2).sum(axis=1)
    bias = weights @ (probs @ (slope * m) - truth)
    var_phase = mse - bias**2
    ref_var = _reference_variance(config, noise)
    return float(np.sqrt(var_phase / ramsey_time**2 + ref_var))


def _probs_unsorted(params, n, phases):
    phases = np.asarray(phases, dtype=float)
    table = outcome_table(params, n, phases)
    order = np.argsort(phases, kind="stable")
    probs = np.empty_like(table.probs)
    probs[order] = table.probs
    return probs


def _reference_slope(config: FreqExperimentConfig) -> float:
    return design_slope(config.css_params, config.n_particles, config.design_width)


def _reference_variance(config: FreqExperimentConfig, noise: NoiseModel) -> float:
    """Variance of the drift-correction frequency offset."""
    n = config.n_particles
    m = projections(n)
    a = _reference_slope(config)
    flick = noise.flicker_width(config.drift_time)
    if flick > 0:
        quad = gauss_hermite(flick, 16)
        probs = _probs_unsorted(implemented_params(config.css_params, noise), n, quad.phases)
        mean = quad.weights @ (probs @ m)
        second = quad.weights @ (probs @ m**2)
        # every reference shot sees its own laser phase
        var_m = second - mean**2
    else:
        p = _probs_unsorted(implemented_params(config.css_params, noise), n, [0.0])[0]
        var_m = p @ m**2 - (p @ m) ** 2
    return float(a * a * var_m / config.drift_shots / config.drift_time**2)


def run_frequency_experiment(config: FreqExperimentConfig, noise: NoiseModel | None = None,
                             seed: int = 0, keep_records: bool = False) -> FreqExperimentResult:
    """Simulate the three-sequence detuning reconstruction at every Ramsey time.

    Each sample draws a detuning, measures a 50-shot zero-detuning CSS
    reference at the drift time (its mean frequency estimate is subtracted),
    then takes single-shot estimates ``slope * m / T_R`` with every sequence.
    """
    noise = NoiseModel() if noise is None else noise
    n = config.n_particles
    m = projections(n)
    seqs = config.sequences()
    slopes = {k: design_slope(p, n, config.design_width) for k, p in seqs.items()}
    ref_slope = _reference_slope(config)
    ref_params = implemented_params(config.css_params, noise)
    points, records = [], []
    for t_index, t_r in enumerate(config.ramsey_times):
        rng = np.random.default_rng([seed, t_index])
        detunings = truncated_normal(rng, config.detuning_spread, config.truncation * config.detuning_spread,
                                     config.samples_per_time)
        errors = {k: np.empty((config.samples_per_time, config.shots_per_sample)) for k in seqs}
        for s, dw in enumerate(detunings):
            ref_phases = rng.normal(0.0, 1.0, config.drift_shots) * noise.flicker_width(config.drift_time)
            ref_probs = _probs_unsorted(ref_params, n, ref_phases)
            ref_m = np.array([m[_draw_one(rng, p)] for p in ref_probs])
            offset = ref_slope * ref_m.mean() / config.drift_time
            for key, params in seqs.items():
                impl = implemented_params(params, noise, dw)
                phases = dw * t_r + rng.normal(0.0, 1.0, config.shots_per_sample) * noise.flicker_width(t_r)
                probs = _probs_unsorted(impl, n, phases)
                shots_m = np.array([m[_draw_one(rng, p)] for p in probs])
                est = slopes[key] * shots_m / t_r - offset
                errors[key][s] = est - dw
                if keep_records:
                    records.append({"ramsey_time": t_r, "sample": s, "sequence": key, "detuning": float(dw),
                                    "reference_offset": float(offset), "mean_error": float(errors[key][s].mean())})
        for key, params in seqs.items():
            err = errors[key]
            std = float(np.std(err, ddof=1))
            boot = np.empty(config.bootstrap)
            for b in range(config.bootstrap):
                pick = rng.integers(0, err.shape[0], err.shape[0])
                boot[b] = np.std(err[pick].ravel(), ddof=1)
            theory = frequency_theory(config, params, slopes[key], t_r, replace(noise, detuning_twist_error=0.0))
            points.append(FreqPoint(t_r, key, std, float(np.std(boot, ddof=1)), theory, err.size))
    return FreqExperimentResult(points, records)


def _draw_one(rng, p) -> int:
    p = np.clip(p, 0.0, None)
    return int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right").clip(0, p.size - 1))
