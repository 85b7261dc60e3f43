"""Optimal quantum interferometer: minimal BMSE over input states, measurements and estimators.

For a pure input ``|psi>`` and the phase imprint ``exp(-i phi J_z)`` with a
zero-mean Gaussian prior, the prior-averaged moments are element-wise
products with analytic Gaussian factors.  For fixed input, the optimal
estimator-generating operator ``L`` solves ``L rho_bar + rho_bar L = 2 rho_bar'``
and the cost is ``width^2 - Tr(rho_bar' L)``.  For fixed ``L`` the cost is
linear in the input projector, so the best input is the top eigenvector of an
effective operator.  Alternating the two steps never increases the cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import ConvergenceFailure, InvalidArgument
from .metrology import hl_bmse
from .spin import DickeVector, coherent_state, projections


@dataclass(frozen=True)
class OqiSolution:
    n_particles: int
    prior_width: float
    bmse: float
    state: DickeVector = field(repr=False)
    seed_spectrum: np.ndarray = field(repr=False)
    iterations: int
    residual: float
    history: tuple = field(default=(), repr=False)

    @property
    def ratio(self) -> float:
        return float(np.sqrt(self.bmse) / self.prior_width)

    @property
    def db(self) -> float:
        return float(10 * np.log10(self.ratio))


class _Moments:
    """Gaussian phase-averaging factors for one (N, width)."""

    def __init__(self, n, width):
        m = projections(n)
        self.delta = m[:, None] - m[None, :]
        self.var = width * width
        self.gauss = np.exp(-0.5 * self.var * self.delta**2)
        # prior average of phi * exp(-i phi delta) is -i var delta * gauss
        self.first = -1j * self.var * self.delta * self.gauss

    def averaged(self, psi):
        rho = np.outer(psi, psi.conj())
        return rho * self.gauss, rho * self.first

    def solve(self, psi):
        rho_bar, rho_prime = self.averaged(psi)
        lam, vecs = np.linalg.eigh(rho_bar)
        rp = vecs.conj().T @ rho_prime @ vecs
        denom = lam[:, None] + lam[None, :]
        ok = denom > 1e-12
        lt = np.where(ok, 2 * rp / np.where(ok, denom, 1.0), 0.0)
        gen = vecs @ lt @ vecs.conj().T
        gen = 0.5 * (gen + gen.conj().T)
        cost = self.var - float(np.real(np.sum(rho_prime.T * gen)))
        return cost, gen

    def effective(self, gen):
        # prior average of U^dag (2 phi L - L^2) U element-wise
        a = 2 * gen * np.conj(self.first) - (gen @ gen) * self.gauss
        return 0.5 * (a + a.conj().T)


def _normalize(psi):
    psi = np.asarray(psi, dtype=complex)
    return psi / np.linalg.norm(psi)


def _presolve(mom: _Moments, psi0, max_evals=5000):
    """Quasi-Newton descent on the input state.

    With the optimal ``L`` the cost equals ``width^2 - <psi|A|psi>`` and, by the
    envelope argument, its gradient is ``-(A - <A>) psi``.  This reaches the
    see-saw fixed point much faster where plain alternation creeps.
    """
    n = psi0.size

    def fun(z):
        psi = z[:n] + 1j * z[n:]
        norm = np.sqrt(np.vdot(psi, psi).real)
        u = psi / norm
        cost, gen = mom.solve(u)
        au = mom.effective(gen) @ u
        g = -2.0 * (au - np.vdot(u, au).real * u) / norm
        return cost, np.concatenate([g.real, g.imag])

    z0 = np.concatenate([psi0.real, psi0.imag])
    res = optimize.minimize(fun, z0, jac=True, method="L-BFGS-B",
                            options={"maxiter": max_evals, "maxfun": max_evals, "ftol": 1e-16, "gtol": 1e-12})
    return _normalize(res.x[:n] + 1j * res.x[n:]), int(res.nfev)


def _seesaw(mom: _Moments, psi, tol, max_iter):
    cost, gen = mom.solve(psi)
    history = [cost]
    for it in range(1, max_iter + 1):
        _, vecs = np.linalg.eigh(mom.effective(gen))
        new_psi = vecs[:, -1]
        new_cost, new_gen = mom.solve(new_psi)
        if new_cost > cost + 1e-12:
            # numerical noise at convergence; keep the better point
            return cost, psi, gen, it, history, True
        history.append(new_cost)
        drop = cost - new_cost
        psi, gen, cost = new_psi, new_gen, new_cost
        if drop < tol:
            return cost, psi, gen, it, history, True
    return cost, psi, gen, max_iter, history, False


def oqi_bound(n: int, prior_width: float, tol: float = 1e-12, max_iter: int = 500,
              initial=None, restarts: int = 3, seed: int = 0, presolve: bool = True) -> OqiSolution:
    """See-saw minimization of the BMSE over pure Dicke inputs and all measurements.

    With ``presolve`` the starting state is first moved by a quasi-Newton
    descent on the same cost; the see-saw then runs to its fixed point.
    ``iterations`` counts see-saw steps only.
    """
    if int(n) != n or n < 1:
        raise InvalidArgument("N must be a positive integer")
    if not prior_width > 0:
        raise InvalidArgument("prior width must be positive")
    if not tol > 0:
        raise InvalidArgument("tol must be positive")
    n = int(n)
    mom = _Moments(n, float(prior_width))
    start = coherent_state(n, np.pi / 2, 0.0).amplitudes if initial is None else _normalize(initial)
    if presolve:
        start, _ = _presolve(mom, start)
    best = _seesaw(mom, start, tol, max_iter)
    converged = best[5]
    # random restarts guard against stagnation on a poor plateau
    rng = np.random.default_rng(seed)
    for _ in range(restarts if not converged else 0):
        trial = _normalize(rng.normal(size=n + 1) + 1j * rng.normal(size=n + 1))
        if presolve:
            trial, _ = _presolve(mom, trial)
        res = _seesaw(mom, trial, tol, max_iter)
        if res[0] < best[0]:
            best = res
        converged = converged or res[5]
    cost, psi, gen, iters, history, ok = best
    residual = history[-2] - history[-1] if len(history) > 1 else 0.0
    sol = OqiSolution(n, float(prior_width), float(cost), DickeVector(n, _normalize(psi)),
                      np.linalg.eigvalsh(gen), iters, float(residual), tuple(history))
    if not converged:
        raise ConvergenceFailure(f"see-saw did not converge in {max_iter} iterations", best=sol)
    if sol.bmse < hl_bmse(n, prior_width) - 1e-9:
        raise ConvergenceFailure("solution violates the Heisenberg bound", best=sol)
    return sol


def oqi_curve(n: int, widths, tol: float = 1e-12, max_iter: int = 500) -> list:
    """Solve on a width grid, warm-starting each point from its neighbour."""
    widths = np.asarray(widths, dtype=float)
    order = np.argsort(widths)
    out = [None] * widths.size
    prev = None
    for idx in order:
        cold = oqi_bound(n, widths[idx], tol, max_iter)
        if prev is not None:
            warm = oqi_bound(n, widths[idx], tol, max_iter, initial=prev.state.amplitudes)
            if warm.bmse < cold.bmse:
                cold = warm
        out[idx] = prev = cold
    return out


def oqi_minimum(n: int, lo: float = 0.2, hi: float = 1.2, xatol: float = 1e-4):
    """Width minimizing the OQI ratio ``Delta phi / delta phi``; returns ``(width, solution)``."""
    res = optimize.minimize_scalar(lambda w: oqi_bound(n, w).db, bounds=(lo, hi), method="bounded",
                                   options={"xatol": xatol})
    return float(res.x), oqi_bound(n, float(res.x))
