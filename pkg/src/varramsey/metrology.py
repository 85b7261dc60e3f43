"""Phase estimators, Bayesian cost evaluation, metrological bounds and clock figures."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .circuits import CircuitParams, OutcomeTable, encoded_state, decoding_matrix, outcome_table
from .errors import (
    DegenerateDistribution,
    InsufficientData,
    InvalidArgument,
    NoInformation,
    UndefinedOrientation,
)
from .spin import DickeVector, projections, spin_moments

ESTIMATORS = ("linear", "arcsine", "mbmse")


@dataclass(frozen=True)
class Prior:
    """Zero-mean Gaussian prior on the phase."""

    width: float
    mean: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.width) or self.width <= 0:
            raise InvalidArgument(f"prior width must be positive, got {self.width!r}")
        if self.mean != 0.0:
            raise InvalidArgument("only zero-mean priors are supported")

    @property
    def information(self) -> float:
        return self.width**-2

    def pdf(self, phi):
        phi = np.asarray(phi, dtype=float)
        return np.exp(-0.5 * (phi / self.width) ** 2) / (np.sqrt(2 * np.pi) * self.width)


def _as_prior(prior) -> Prior:
    return prior if isinstance(prior, Prior) else Prior(float(prior))


@dataclass(frozen=True)
class Quadrature:
    """Nodes and weights such that ``sum(w * f(phases))`` approximates the prior average of ``f``."""

    scheme: str
    phases: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    prior: Prior

    @property
    def n_nodes(self) -> int:
        return self.phases.size

    def average(self, values, axis=0):
        return np.tensordot(self.weights, np.asarray(values), axes=([0], [axis]))

    def describe(self) -> dict:
        return {"scheme": self.scheme, "nodes": int(self.n_nodes)}


def gauss_hermite(prior, nodes: int = 64) -> Quadrature:
    """Gauss-Hermite rule with the Gaussian weight absorbed (``phi = sqrt(2) * width * x``)."""
    prior = _as_prior(prior)
    if nodes < 1:
        raise InvalidArgument("need at least one node")
    x, w = np.polynomial.hermite.hermgauss(int(nodes))
    return Quadrature("gauss-hermite", np.sqrt(2.0) * prior.width * x, w / np.sqrt(np.pi), prior)


def simpson_weights(grid) -> np.ndarray:
    """Composite Simpson weights on a uniform grid with an odd number of points."""
    grid = np.asarray(grid, dtype=float)
    n = grid.size
    if n < 3 or n % 2 == 0:
        raise InvalidArgument(f"Simpson's rule needs an odd number (>= 3) of points, got {n}")
    h = np.diff(grid)
    if np.ptp(h) > 1e-9 * max(abs(h[0]), 1e-300):
        raise InvalidArgument("Simpson's rule needs a uniform grid")
    w = np.full(n, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * h[0] / 3.0


def simpson(prior, points: int = 2001, half_width: float = 6.0, grid=None) -> Quadrature:
    """Simpson rule on a symmetric grid over ``+-half_width`` prior widths."""
    prior = _as_prior(prior)
    if grid is None:
        grid = np.linspace(-half_width * prior.width, half_width * prior.width, int(points))
    grid = np.asarray(grid, dtype=float)
    return Quadrature("simpson", grid, simpson_weights(grid) * prior.pdf(grid), prior)


def make_quadrature(prior, scheme: str = "gauss-hermite", nodes: int | None = None) -> Quadrature:
    if scheme == "gauss-hermite":
        return gauss_hermite(prior, nodes or 64)
    if scheme == "simpson":
        return simpson(prior, nodes or 2001)
    raise InvalidArgument(f"unknown quadrature scheme {scheme!r}")


def _check_table(table: OutcomeTable, quad: Quadrature):
    if table.phases.shape != quad.phases.shape or not np.allclose(
        table.phases, quad.phases, rtol=0, atol=1e-12
    ):
        raise InvalidArgument("outcome table must be tabulated on the quadrature nodes")


# ---------------------------------------------------------------------------
# estimators


@dataclass(frozen=True)
class Estimator:
    kind: str
    slope: float = 0.0
    offset: float = 0.0
    n_particles: int | None = None
    sign: float = 1.0
    posterior_means: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ESTIMATORS:
            raise InvalidArgument(f"estimator kind must be one of {ESTIMATORS}")
        if self.kind == "linear" and not np.isfinite(self.slope):
            raise InvalidArgument("linear slope must be finite")
        if self.kind in ("arcsine", "mbmse") and self.n_particles is None:
            raise InvalidArgument(f"{self.kind} estimator needs n_particles")
        if self.kind == "mbmse":
            if self.posterior_means is None or len(self.posterior_means) != self.n_particles + 1:
                raise InvalidArgument("MBMSE estimator table must cover all N+1 outcomes")

    @classmethod
    def linear(cls, slope: float, offset: float = 0.0) -> "Estimator":
        return cls("linear", slope=float(slope), offset=float(offset))

    @classmethod
    def arcsine(cls, n: int, sign: float = 1.0) -> "Estimator":
        return cls("arcsine", n_particles=int(n), sign=float(np.sign(sign) or 1.0))

    @classmethod
    def mbmse(cls, table: OutcomeTable, quad: Quadrature) -> "Estimator":
        """Posterior-mean estimator tabulated from ``p(m|phi)`` and the prior."""
        _check_table(table, quad)
        evidence = quad.average(table.probs)
        first = quad.average(table.probs * table.phases[:, None])
        with np.errstate(invalid="ignore", divide="ignore"):
            means = np.where(evidence > 1e-300, first / evidence, quad.prior.mean)
        return cls("mbmse", n_particles=table.n_particles, posterior_means=means)

    def __call__(self, m):
        return estimate_phase(self, m)


def estimate_phase(est: Estimator, m):
    m = np.asarray(m, dtype=float)
    if est.kind == "linear":
        return est.slope * m + est.offset
    if est.kind == "arcsine":
        arg = np.clip(2.0 * m / est.n_particles, -1.0, 1.0)
        return est.sign * np.arcsin(arg) + est.offset
    idx = np.rint(m + est.n_particles / 2).astype(int)
    if np.any(idx < 0) or np.any(idx > est.n_particles):
        raise InvalidArgument(f"outcome outside the range of N={est.n_particles}")
    return est.posterior_means[idx] + est.offset


def optimal_linear_slope(table: OutcomeTable, quad: Quadrature) -> float:
    """Closed-form slope minimizing the BMSE of ``phi_est = a m``."""
    _check_table(table, quad)
    m = table.outcomes
    e_m2 = float(quad.average(table.probs @ (m * m)))
    if e_m2 <= 1e-300:
        raise DegenerateDistribution("E[m^2] vanishes; the outcomes carry no signal")
    e_pm = float(quad.average(table.phases * (table.probs @ m)))
    return e_pm / e_m2


def signal_sign(table: OutcomeTable, quad: Quadrature) -> float:
    """Sign of the phase-outcome correlation (orientation for the arcsine estimator)."""
    m = table.outcomes
    return float(np.sign(quad.average(table.phases * (table.probs @ m))) or 1.0)


def mse_curve(table: OutcomeTable, est: Estimator):
    """Mean squared error at every tabulated phase.  Returns ``(phases, mse)``."""
    est_m = estimate_phase(est, table.outcomes)
    err2 = (table.phases[:, None] - est_m[None, :]) ** 2
    return table.phases.copy(), np.sum(err2 * table.probs, axis=1)


@dataclass(frozen=True)
class CostReport:
    bmse: float
    prior_width: float
    estimator: str
    slope: float = float("nan")
    offset: float = 0.0
    quadrature: dict = field(default_factory=dict)

    @property
    def posterior_width(self) -> float:
        return float(np.sqrt(self.bmse))

    @property
    def ratio(self) -> float:
        return self.posterior_width / self.prior_width

    @property
    def db(self) -> float:
        return db(self.ratio)

    def as_dict(self) -> dict:
        return {
            "bmse": self.bmse,
            "posterior_width": self.posterior_width,
            "prior_width": self.prior_width,
            "ratio": self.ratio,
            "db": self.db,
            "estimator": self.estimator,
            "slope": self.slope,
            "offset": self.offset,
            "quadrature": dict(self.quadrature),
        }


def db(ratio) -> float:
    """Decibel value of a width ratio: ``10 log10(ratio)``."""
    return 10.0 * np.log10(ratio)


def bmse(table: OutcomeTable, est: Estimator, quad: Quadrature) -> CostReport:
    _check_table(table, quad)
    _, mse = mse_curve(table, est)
    cost = float(quad.average(mse))
    return CostReport(cost, quad.prior.width, est.kind, est.slope, est.offset, quad.describe())


def build_estimator(kind: str, table: OutcomeTable, quad: Quadrature) -> Estimator:
    if kind == "linear":
        return Estimator.linear(optimal_linear_slope(table, quad))
    if kind == "arcsine":
        return Estimator.arcsine(table.n_particles, signal_sign(table, quad))
    if kind == "mbmse":
        return Estimator.mbmse(table, quad)
    raise InvalidArgument(f"unknown estimator {kind!r}")


def circuit_cost(params: CircuitParams, n: int, prior, estimator: str = "linear",
                 scheme: str = "gauss-hermite", nodes: int | None = None) -> CostReport:
    """BMSE of a circuit with an estimator built for it (optimal slope / posterior mean)."""
    quad = make_quadrature(_as_prior(prior), scheme, nodes)
    table = outcome_table(params, n, quad.phases)
    est = build_estimator(estimator, table, quad)
    return bmse(table, est, quad)


# ---------------------------------------------------------------------------
# experimental-style cost estimate


@dataclass(frozen=True)
class ExperimentalFit:
    slope: float
    offset: float
    report: CostReport


def _histograms_to_probs(histograms):
    counts = np.asarray(histograms, dtype=float)
    if counts.ndim != 2:
        raise InvalidArgument("histograms must be a (phases x outcomes) array")
    totals = counts.sum(axis=1, keepdims=True)
    if np.any(totals <= 0):
        raise InsufficientData("every phase needs at least one recorded shot")
    return counts / totals


def fit_experimental_cost(histograms, phases, prior, offset_bound: float = 0.2,
                          slope: float | None = None) -> ExperimentalFit:
    """Fit slope and phase offset by minimizing the Simpson-integrated BMSE.

    ``histograms[i]`` holds outcome counts (index ``k`` = number of excitations)
    recorded at the implemented phase ``phases[i]``; the true phase is taken as
    ``phases[i] - offset``.  Passing ``slope`` holds it fixed.
    """
    prior = _as_prior(prior)
    phases = np.asarray(phases, dtype=float)
    if phases.size < 3:
        raise InsufficientData("need at least three phase points")
    probs = _histograms_to_probs(histograms)
    if probs.shape[0] != phases.size:
        raise InvalidArgument("one histogram per phase point is required")
    n = probs.shape[1] - 1
    m = projections(n)
    sw = simpson_weights(phases)
    mean_m = probs @ m
    mean_m2 = probs @ (m * m)

    def cost_and_slope(offset):
        phi = phases - offset
        w = sw * prior.pdf(phi)
        e_m2 = w @ mean_m2
        e_pm = w @ (phi * mean_m)
        a = (e_pm / e_m2 if e_m2 > 0 else 0.0) if slope is None else slope
        c = w @ (phi**2) - 2 * a * e_pm + a * a * e_m2
        return float(c), float(a)

    res = optimize.minimize_scalar(lambda t: cost_and_slope(t)[0], bounds=(-offset_bound, offset_bound),
                                   method="bounded", options={"xatol": 1e-9})
    offset = float(res.x)
    cost, a = cost_and_slope(offset)
    report = CostReport(cost, prior.width, "linear", a, offset, {"scheme": "simpson", "nodes": int(phases.size)})
    return ExperimentalFit(a, offset, report)


# ---------------------------------------------------------------------------
# bounds


def sql_bmse(n: int, width: float) -> float:
    _check_bound_args(n, width)
    return 1.0 / (n + width**-2)


def hl_bmse(n: int, width: float) -> float:
    _check_bound_args(n, width)
    return 1.0 / (n * n + width**-2)


def phase_slip_probability(width: float) -> float:
    """Prior mass outside ``[-pi, pi)``."""
    return float(special.erfc(np.pi / (np.sqrt(2.0) * width)))


def psl_bmse(width: float) -> float:
    if width <= 0:
        raise InvalidArgument("prior width must be positive")
    slip = (2 * np.pi) ** 2 * phase_slip_probability(width)
    if slip == 0.0:
        return float(width**2)
    return float(slip * width**2 / (slip + width**2))


def van_trees_bound(avg_fisher: float, prior_information: float) -> float:
    if avg_fisher < 0 or prior_information <= 0:
        raise InvalidArgument("need non-negative Fisher information and positive prior information")
    return 1.0 / (avg_fisher + prior_information)


def _check_bound_args(n, width):
    if n < 1:
        raise InvalidArgument("N must be at least 1")
    if width <= 0:
        raise InvalidArgument("prior width must be positive")


def fisher_information(params: CircuitParams, n: int, phases) -> np.ndarray:
    """Classical Fisher information of ``p(m|phi)`` at each phase (analytic derivative)."""
    phases = np.atleast_1d(np.asarray(phases, dtype=float))
    m = projections(n)
    dec = decoding_matrix(params, n)
    pre = np.exp(-1j * np.outer(m, phases)) * encoded_state(params, n)[:, None]
    amp = dec @ pre
    damp = dec @ (-1j * m[:, None] * pre)
    p = np.abs(amp) ** 2
    dp = 2 * np.real(np.conj(amp) * damp)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 1e-14, dp * dp / p, 0.0)
    return terms.sum(axis=0)


def average_fisher(params: CircuitParams, n: int, prior, nodes: int = 128) -> float:
    quad = gauss_hermite(_as_prior(prior), nodes)
    return float(quad.average(fisher_information(params, n, quad.phases)))


# ---------------------------------------------------------------------------
# clocks


@dataclass(frozen=True)
class ClockSpec:
    alpha: float = 1.0
    bandwidth: float = 2 * np.pi * 6.0
    ramsey_time: float = 1.0
    averaging_time: float = 1.0
    reference_frequency: float = 2 * np.pi * 411e12

    def __post_init__(self):
        for name in ("bandwidth", "ramsey_time", "averaging_time", "reference_frequency"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be positive")
        if not 0 < self.alpha <= 2:
            raise InvalidArgument("noise exponent alpha must lie in (0, 2]")

    @property
    def prior_width(self) -> float:
        return prior_width_from_time(self.bandwidth, self.ramsey_time, self.alpha)


def prior_width_from_time(bandwidth: float, ramsey_time: float, alpha: float = 1.0) -> float:
    if bandwidth <= 0 or ramsey_time <= 0 or alpha <= 0:
        raise InvalidArgument("bandwidth, Ramsey time and alpha must be positive")
    return float((bandwidth * ramsey_time) ** (alpha / 2))


def ramsey_time_from_width(bandwidth: float, width: float, alpha: float = 1.0) -> float:
    if bandwidth <= 0 or width <= 0 or alpha <= 0:
        raise InvalidArgument("bandwidth, prior width and alpha must be positive")
    return float(width ** (2.0 / alpha) / bandwidth)


def effective_uncertainty(posterior_width: float, prior_width: float) -> float:
    """Per-cycle phase uncertainty of a clock using the measurement."""
    ratio = posterior_width / prior_width
    if ratio >= 1:
        raise NoInformation("posterior is not narrower than the prior")
    return float(posterior_width / np.sqrt(1.0 - ratio**2))


def normalized_allan(posterior_width: float, prior_width: float, alpha: float = 1.0) -> float:
    """``sigma * omega_A * sqrt(tau / b)`` expressed through the prior width."""
    return effective_uncertainty(posterior_width, prior_width) / prior_width ** (1.0 / alpha)


@dataclass(frozen=True)
class AllanResult:
    effective_uncertainty: float
    sigma: float
    normalized: float


def allan(report: CostReport, clock: ClockSpec) -> AllanResult:
    """Allan deviation of a dead-time-free clock built on the measurement in ``report``."""
    dphi_m = effective_uncertainty(report.posterior_width, report.prior_width)
    t_r, tau = clock.ramsey_time, clock.averaging_time
    sigma = dphi_m / (clock.reference_frequency * t_r) * np.sqrt(t_r / tau)
    normalized = sigma * clock.reference_frequency * np.sqrt(tau / clock.bandwidth)
    return AllanResult(dphi_m, float(sigma), float(normalized))


def wineland_xi(params: CircuitParams, n: int) -> float:
    """Wineland squeezing parameter of the state entering the phase imprint."""
    state = DickeVector(n, encoded_state(params, n) / np.linalg.norm(encoded_state(params, n)))
    mean, cov = spin_moments(state)
    length = np.linalg.norm(mean)
    if length < 1e-12:
        raise UndefinedOrientation("mean spin vanishes")
    u = mean / length
    basis = np.linalg.svd(u[None, :])[2][1:]
    transverse = basis @ cov @ basis.T
    min_var = float(np.linalg.eigvalsh(transverse)[0])
    return float(np.sqrt(n * min_var) / length)
