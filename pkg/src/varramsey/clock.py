"""Clock figures across prior widths: normalized Allan deviation, gains over the CSS, gap to the optimal clock."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import NoInformation
from .metrology import normalized_allan
from .oqi import oqi_bound
from .theory import optimize_theory, theory_curve

CSS_SHAPE = (0, 0)


def normalized_curve(bmse, widths, alpha: float = 1.0) -> np.ndarray:
    """Normalized Allan deviation per width; NaN where the measurement gains nothing."""
    out = np.full(len(widths), np.nan)
    for i, (c, w) in enumerate(zip(bmse, widths)):
        try:
            out[i] = normalized_allan(np.sqrt(c), w, alpha)
        except NoInformation:
            pass
    return out


@dataclass(frozen=True)
class ClockOptimum:
    label: str
    prior_width: float
    normalized: float
    bmse: float
    params: np.ndarray | None = field(default=None, repr=False)
    # grid values: (widths, bmse, normalized Allan deviation)
    curve: tuple | None = field(default=None, repr=False)


def _refine(fun, widths, values):
    i = int(np.nanargmin(values))
    lo = widths[max(i - 1, 0)]
    hi = widths[min(i + 1, len(widths) - 1)]
    if hi <= lo:
        return widths[i]
    res = optimize.minimize_scalar(fun, bounds=(lo, hi), method="bounded", options={"xatol": 1e-4})
    return float(res.x) if res.fun <= values[i] else float(widths[i])


def circuit_clock_optimum(n: int, shape, widths, alpha: float = 1.0, starts: int = 24, seed: int = 0,
                          bounds=None, form: str = "canonical", optimizer=None) -> ClockOptimum:
    """Prior width minimizing the normalized Allan deviation of the best ``shape`` circuit.

    ``optimizer`` replaces :func:`optimize_theory` (same call signature), e.g.
    to restrict the circuits to a hardware twisting window.
    """
    run = optimize_theory if optimizer is None else optimizer
    widths = np.sort(np.asarray(widths, dtype=float))
    curve = theory_curve(n, shape, widths, starts=starts, seed=seed, bounds=bounds, form=form,
                         optimizer=optimizer)
    values = normalized_curve([r.cost for r in curve], widths, alpha)
    i = int(np.nanargmin(values))
    x0 = curve[i].params.to_vector() if sum(shape) else None
    cache = {}

    def solve(w):
        kwargs = {"bounds": bounds} if bounds is not None else {}
        res = run(n, shape, w, starts=2, seed=seed, x0=x0, form=form, **kwargs)
        cache[w] = res
        return res

    def fun(w):
        res = solve(w)
        try:
            return normalized_allan(np.sqrt(res.cost), w, alpha)
        except NoInformation:
            return np.inf

    best_w = _refine(fun, widths, values)
    res = cache.get(best_w) or solve(best_w)
    label = f"({shape[0]},{shape[1]})"
    return ClockOptimum(label, best_w, normalized_allan(np.sqrt(res.cost), best_w, alpha), res.cost,
                        res.params.to_vector(), (widths, np.array([r.cost for r in curve]), values))


def oqc_optimum(n: int, widths, alpha: float = 1.0) -> ClockOptimum:
    """Optimal quantum clock: the OQI bound pushed through the Allan normalization."""
    widths = np.sort(np.asarray(widths, dtype=float))
    costs = [oqi_bound(n, w).bmse for w in widths]
    values = normalized_curve(costs, widths, alpha)

    def fun(w):
        try:
            return normalized_allan(np.sqrt(oqi_bound(n, w).bmse), w, alpha)
        except NoInformation:
            return np.inf

    best_w = _refine(fun, widths, values)
    c = oqi_bound(n, best_w).bmse
    return ClockOptimum("OQC", best_w, normalized_allan(np.sqrt(c), best_w, alpha), c,
                        curve=(widths, np.array(costs), values))


def gain_db(reference: ClockOptimum, other: ClockOptimum) -> float:
    """How much lower ``other``'s Allan deviation is, in dB."""
    return float(10 * np.log10(reference.normalized / other.normalized))


@dataclass(frozen=True)
class AllanComparison:
    n_particles: int
    alpha: float
    optima: dict
    gains: dict
    gap_to_oqc: float


def allan_comparison(n: int, widths, alpha: float = 1.0, shapes=((1, 0), (1, 2)), starts: int = 24,
                     seed: int = 0, bounds_for=None, gap_shape=(1, 2), optimizer=None) -> AllanComparison:
    """Gains of each shape over the CSS at their own optimal widths, and the gap of ``gap_shape`` to the OQC.

    ``bounds_for`` maps a shape to optimizer bounds (default: unconstrained twists);
    ``optimizer`` is passed on to :func:`circuit_clock_optimum`.
    """
    optima = {}
    for shape in (CSS_SHAPE,) + tuple(tuple(s) for s in shapes):
        bounds = None if bounds_for is None else bounds_for(shape)
        optima[shape] = circuit_clock_optimum(n, shape, widths, alpha, starts, seed, bounds, optimizer=optimizer)
    optima["oqc"] = oqc_optimum(n, widths, alpha)
    gains = {s: gain_db(optima[CSS_SHAPE], optima[tuple(s)]) for s in shapes}
    gap = gain_db(optima[tuple(gap_shape)], optima["oqc"])
    return AllanComparison(n, alpha, optima, gains, gap)
