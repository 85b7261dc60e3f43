"""Noise-free circuit cost with exact gradients, and theory-side circuit optimization.

The ideal cost of a circuit is the Gauss-Hermite BMSE of the linear estimator
with its closed-form optimal slope.  Gradients follow from the adjoint method
through the gate list; the optimal slope drops out of the derivative because
the cost is stationary in it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize

from .circuits import CircuitParams
from .spin import InvalidArgument, projections, spectral_cache


@lru_cache(maxsize=None)
def gauss_hermite_rule(prior_width: float, nodes: int):
    """Phases and probability weights integrating against the Gaussian prior."""
    x, w = np.polynomial.hermite.hermgauss(int(nodes))
    phases = np.sqrt(2.0) * prior_width * x
    weights = w / np.sqrt(np.pi)
    phases.setflags(write=False)
    weights.setflags(write=False)
    return phases, weights


def _gate_list(shape, form):
    """(kind, axis, parameter index or fixed angle) in application order."""
    t1 = "z" if form == "canonical" else "y"
    n_en, n_de = shape
    gates = [("R", "y", ("const", np.pi / 2))]
    for k in range(n_en):
        gates += [("T", t1, 3 * k), ("T", "x", 3 * k + 1), ("R", "x", 3 * k + 2)]
    if form == "experimental":
        gates.append(("R", "x", ("const", np.pi / 2)))
    gates.append(("P", "z", None))
    if form == "experimental":
        gates.append(("R", "x", ("const", -np.pi / 2)))
    for k in range(n_en, n_en + n_de):
        gates += [("R", "x", 3 * k + 2), ("T", "x", 3 * k + 1), ("T", t1, 3 * k)]
    if form == "canonical":
        gates.append(("R", "x", ("const", np.pi / 2)))
    return gates


class IdealCost:
    """Noise-free BMSE of a circuit shape as a function of its angle vector.

    Calling the object returns the cost for the optimal linear estimator;
    :meth:`value_and_grad` also returns the exact gradient.
    """

    def __init__(self, n: int, shape, prior_width: float, nodes: int = 64, form: str = "canonical"):
        if prior_width <= 0:
            raise InvalidArgument("prior width must be positive")
        self.n = int(n)
        self.shape = tuple(shape)
        self.form = form
        self.prior_width = float(prior_width)
        self.phases, self.weights = gauss_hermite_rule(float(prior_width), int(nodes))
        self.m = projections(self.n)
        self._gates = _gate_list(self.shape, form)
        self._phase_diag = np.exp(-1j * np.outer(self.m, self.phases))
        self._prior_var = float(self.weights @ self.phases**2)
        self.n_evals = 0

    @property
    def n_params(self):
        return 3 * sum(self.shape)

    def _spectrum(self, kind, axis):
        cache = spectral_cache(axis, self.n)
        lam = cache.eigenvalues if kind == "R" else cache.eigenvalues**2
        return cache.eigenvectors, lam, axis == "z"

    def _angle(self, spec, x):
        if isinstance(spec, tuple):
            return spec[1]
        return x[spec]

    def _apply(self, kind, axis, angle, psi, inverse=False):
        if kind == "P":
            return psi * (self._phase_diag.conj() if inverse else self._phase_diag)
        if angle == 0.0:
            return psi
        vecs, lam, diagonal = self._spectrum(kind, axis)
        phase = np.exp((1j if inverse else -1j) * angle * lam)[:, None]
        if diagonal:
            return phase * psi
        return vecs @ (phase * (vecs.conj().T @ psi))

    def _generator(self, kind, axis, psi):
        vecs, lam, diagonal = self._spectrum(kind, axis)
        if diagonal:
            return lam[:, None] * psi
        return vecs @ (lam[:, None] * (vecs.conj().T @ psi))

    def _forward(self, x):
        psi = np.zeros((self.n + 1, self.phases.size), dtype=complex)
        psi[0] = 1.0
        for kind, axis, spec in self._gates:
            psi = self._apply(kind, axis, None if kind == "P" else self._angle(spec, x), psi)
        return psi

    def _moments(self, probs):
        w, phi, m = self.weights, self.phases, self.m
        e_pm = float(w @ (phi * (m @ probs)))
        e_m2 = float(w @ ((m**2) @ probs))
        return e_pm, e_m2

    def _cost_from_probs(self, probs):
        e_pm, e_m2 = self._moments(probs)
        if e_m2 <= 0:
            return self._prior_var, 0.0
        slope = e_pm / e_m2
        return self._prior_var - e_pm * slope, slope

    def _check(self, x):
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.n_params:
            raise InvalidArgument(f"expected {self.n_params} angles, got {x.size}")
        return x

    def __call__(self, x) -> float:
        x = self._check(x)
        self.n_evals += 1
        probs = np.abs(self._forward(x)) ** 2
        return self._cost_from_probs(probs)[0]

    def slope(self, x) -> float:
        probs = np.abs(self._forward(self._check(x))) ** 2
        return self._cost_from_probs(probs)[1]

    def value_and_grad(self, x):
        x = self._check(x)
        self.n_evals += 1
        psi = self._forward(x)
        probs = np.abs(psi) ** 2
        cost, a = self._cost_from_probs(probs)
        obs = self.weights[None, :] * (
            a * a * (self.m**2)[:, None] - 2 * a * np.outer(self.m, self.phases)
        )
        lam = obs * psi
        grad = np.zeros(self.n_params)
        for kind, axis, spec in reversed(self._gates):
            angle = None if kind == "P" else self._angle(spec, x)
            if kind != "P" and not isinstance(spec, tuple):
                h_psi = self._generator(kind, axis, psi)
                grad[spec] += 2.0 * np.real(np.vdot(lam, -1j * h_psi))
            psi = self._apply(kind, axis, angle, psi, inverse=True)
            lam = self._apply(kind, axis, angle, lam, inverse=True)
        return cost, grad

    def report_db(self, x) -> float:
        return 10 * np.log10(np.sqrt(self(x)) / self.prior_width)


# ---------------------------------------------------------------------------
# theory optimization


@dataclass
class TheoryResult:
    params: CircuitParams
    cost: float
    slope: float
    prior_width: float
    n_particles: int

    @property
    def ratio(self):
        return np.sqrt(self.cost) / self.prior_width

    @property
    def db(self):
        return 10 * np.log10(self.ratio)


def _twist_mask(shape):
    return np.tile([True, True, False], sum(shape))


def default_bounds(shape, twist_bounds=(-np.pi / 4, np.pi / 4)):
    """Twists bounded, rotations free (they are 2pi-periodic)."""
    out = []
    for is_twist in _twist_mask(shape):
        out.append(tuple(twist_bounds) if is_twist else (None, None))
    return out


def twist_start_scale(n: int) -> float:
    """Typical useful twist, about twice the one-axis-twisting optimum ``~N^(-2/3)``."""
    return 2.0 * float(n) ** (-2.0 / 3.0)


def _sampling_box(bounds, shape=None, n=None):
    """Box for random starts; twists are drawn near zero when ``n`` is given."""
    lo = np.array([-np.pi if b[0] is None else b[0] for b in bounds], dtype=float)
    hi = np.array([np.pi if b[1] is None else b[1] for b in bounds], dtype=float)
    if shape is not None and n is not None:
        mask = _twist_mask(shape)
        scale = twist_start_scale(n)
        lo[mask] = np.maximum(lo[mask], -scale)
        hi[mask] = np.maximum(np.minimum(hi[mask], scale), lo[mask])
    return lo, hi


def wrap_rotations(x, shape):
    """Map rotation angles into [-pi, pi); twists are left alone."""
    x = np.array(x, dtype=float)
    rot = ~_twist_mask(shape)
    x[rot] = (x[rot] + np.pi) % (2 * np.pi) - np.pi
    return x


def local_polish(cost: IdealCost, x0, bounds=None, fixed=None):
    """Gradient-based refinement.  ``fixed`` is a boolean mask of frozen angles."""
    x0 = np.asarray(x0, dtype=float)
    free = np.ones(x0.size, bool) if fixed is None else ~np.asarray(fixed, bool)
    if not free.any():
        return x0.copy(), cost(x0)

    def fun(z):
        x = x0.copy()
        x[free] = z
        c, g = cost.value_and_grad(x)
        return c, g[free]

    sub_bounds = None if bounds is None else [b for b, f in zip(bounds, free) if f]
    res = optimize.minimize(fun, x0[free], jac=True, method="L-BFGS-B", bounds=sub_bounds,
                            options={"maxiter": 2000, "ftol": 1e-15, "gtol": 1e-10})
    x = x0.copy()
    x[free] = res.x
    return x, float(res.fun)


def optimize_theory(n, shape, prior_width, *, starts=24, seed=0, x0=None, bounds=None,
                    nodes=64, form="canonical", fixed=None, rng=None) -> TheoryResult:
    """Multi-start gradient search for the noise-free optimal circuit.

    ``x0`` (a vector or list of vectors) seeds warm starts; the remaining
    starts are drawn uniformly inside ``bounds``.
    """
    shape = tuple(shape)
    cost = IdealCost(n, shape, prior_width, nodes=nodes, form=form)
    if sum(shape) == 0:
        x = np.zeros(0)
        return TheoryResult(CircuitParams.from_vector(shape, x, form), cost(x), cost.slope(x),
                            prior_width, n)
    bounds = default_bounds(shape) if bounds is None else list(bounds)
    rng = np.random.default_rng(seed) if rng is None else rng
    candidates = []
    lo, hi = _sampling_box(bounds, shape, n)
    if x0 is not None:
        x0 = np.atleast_2d(np.asarray(x0, dtype=float))
        bl = np.array([-np.inf if b[0] is None else b[0] for b in bounds])
        bh = np.array([np.inf if b[1] is None else b[1] for b in bounds])
        candidates.extend(np.clip(x, bl, bh) for x in x0)
    for _ in range(starts):
        candidates.append(rng.uniform(lo, hi))
    best_x, best_c = None, np.inf
    for start in candidates:
        if fixed is not None:
            start = np.where(fixed, x0[0] if x0 is not None else 0.0, start)
        x, c = local_polish(cost, start, bounds, fixed)
        if c < best_c:
            best_x, best_c = x, c
    best_x = wrap_rotations(best_x, shape)
    params = CircuitParams.from_vector(shape, best_x, form)
    return TheoryResult(params, best_c, cost.slope(best_x), prior_width, n)


def theory_curve(n, shape, widths, *, starts=24, warm_starts=4, seed=0, bounds=None, nodes=64,
                 form="canonical", optimizer=None) -> list:
    """Optimal circuit at each prior width, sweeping from wide to narrow priors.

    The first (widest) point uses ``starts`` random starts; later points are
    warm-started from their neighbour plus ``warm_starts`` fresh draws.
    ``optimizer`` may replace :func:`optimize_theory` (same signature).
    """
    widths = np.asarray(widths, dtype=float)
    run = optimize_theory if optimizer is None else optimizer
    out = [None] * widths.size
    prev = None
    for idx in np.argsort(widths)[::-1]:
        kwargs = dict(starts=starts if prev is None else warm_starts, seed=seed, x0=prev, nodes=nodes,
                      form=form)
        if bounds is not None:
            kwargs["bounds"] = bounds
        res = run(n, shape, float(widths[idx]), **kwargs)
        out[idx] = res
        prev = res.params.to_vector() if sum(shape) else None
    return out
