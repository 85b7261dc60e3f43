"""Gaussian-process meta-model with a product of periodic kernels."""

from __future__ import annotations

import numpy as np
from scipy import linalg, optimize

from ..errors import InvalidArgument
from .constraints import twist_mask

JITTER = 1e-9


def generator_periods(shape, n: int) -> np.ndarray:
    """Fundamental period of the outcome law in each angle.

    Rotations are 2pi-periodic up to a global sign.  ``exp(-i pi J^2)`` is a
    global phase for half-integer spin, so twists repeat after pi for odd N
    and after 2pi for even N.
    """
    twist_period = np.pi if n % 2 else 2 * np.pi
    return np.where(twist_mask(shape), twist_period, 2 * np.pi)


def periodic_kernel(xa, xb, periods, lengths, amplitude):
    xa, xb = np.atleast_2d(xa), np.atleast_2d(xb)
    diff = xa[:, None, :] - xb[None, :, :]
    s = np.sin(np.pi * diff / periods) ** 2
    return amplitude * np.exp(-2.0 * np.sum(s / lengths**2, axis=-1))


class PeriodicGP:
    """GP regression with per-dimension periodic kernels and known noise variances.

    Hyper-parameters (overall amplitude and one length scale per dimension)
    are fitted by maximizing the marginal likelihood on log scale.
    """

    def __init__(self, periods, length_bounds=(1e-3, 1e2)):
        self.periods = np.asarray(periods, dtype=float)
        if np.any(self.periods <= 0):
            raise InvalidArgument("kernel periods must be positive")
        self.length_bounds = length_bounds
        self.lengths = np.full(self.periods.size, 0.5)
        self.amplitude = 1.0
        self._x = None

    @property
    def dim(self):
        return self.periods.size

    def _gram(self, x, noise, lengths, amplitude):
        k = periodic_kernel(x, x, self.periods, lengths, amplitude)
        k[np.diag_indices_from(k)] += noise + JITTER * amplitude
        return k

    def _neg_log_likelihood(self, theta, x, y, noise):
        amplitude = np.exp(theta[0])
        lengths = np.exp(theta[1:])
        k = self._gram(x, noise, lengths, amplitude)
        try:
            c = linalg.cho_factor(k, lower=True)
        except linalg.LinAlgError:
            return 1e25
        alpha = linalg.cho_solve(c, y)
        return 0.5 * y @ alpha + np.sum(np.log(np.diag(c[0])))

    def fit(self, x, y, noise=None, restarts: int = 2, seed: int = 0, optimize_hyper: bool = True):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if x.shape != (y.size, self.dim):
            raise InvalidArgument("training inputs do not match the kernel dimension")
        noise = np.zeros(y.size) if noise is None else np.maximum(np.asarray(noise, dtype=float), 0.0)
        self._mean = float(np.mean(y))
        yc = y - self._mean
        scale = float(np.std(yc)) or 1.0
        if optimize_hyper and y.size >= 3:
            rng = np.random.default_rng(seed)
            lo, hi = np.log(self.length_bounds)
            bounds = [(np.log(scale**2) - 8, np.log(scale**2) + 8)] + [(lo, hi)] * self.dim
            starts = [np.concatenate([[np.log(scale**2)], np.log(self.lengths)])]
            starts += [np.concatenate([[np.log(scale**2)], rng.uniform(lo, hi / 2, self.dim)])
                       for _ in range(restarts)]
            best = None
            for t0 in starts:
                res = optimize.minimize(self._neg_log_likelihood, t0, args=(x, yc, noise),
                                        method="L-BFGS-B", bounds=bounds)
                if best is None or res.fun < best.fun:
                    best = res
            self.amplitude = float(np.exp(best.x[0]))
            self.lengths = np.exp(best.x[1:])
        elif optimize_hyper:
            self.amplitude = scale**2
        self._x = x
        k = self._gram(x, noise, self.lengths, self.amplitude)
        self._chol = linalg.cho_factor(k, lower=True)
        self._alpha = linalg.cho_solve(self._chol, yc)
        return self

    def predict(self, xq, return_var: bool = False):
        if self._x is None:
            raise InvalidArgument("surrogate has not been fitted")
        xq = np.atleast_2d(np.asarray(xq, dtype=float))
        ks = periodic_kernel(xq, self._x, self.periods, self.lengths, self.amplitude)
        mean = self._mean + ks @ self._alpha
        if not return_var:
            return mean
        v = linalg.cho_solve(self._chol, ks.T)
        var = self.amplitude - np.sum(ks * v.T, axis=1)
        return mean, np.maximum(var, 0.0)
