"""Collective spin algebra in the symmetric (Dicke) subspace of N spin-1/2 particles.

Basis ordering is ascending projection: index ``k`` holds ``m = k - N/2``, so
index 0 is the all-down state and ``k`` counts excitations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import InvalidArgument

AXES = ("x", "y", "z")


def _check_n(n: int) -> int:
    if int(n) != n or n < 1:
        raise InvalidArgument(f"number of particles must be a positive integer, got {n!r}")
    return int(n)


def _check_axis(axis: str) -> str:
    if axis not in AXES:
        raise InvalidArgument(f"axis must be one of {AXES}, got {axis!r}")
    return axis


def _check_angle(angle: float) -> float:
    angle = float(angle)
    if not np.isfinite(angle):
        raise InvalidArgument(f"angle must be finite, got {angle!r}")
    return angle


def projections(n: int) -> np.ndarray:
    """Spin projections ``m = -N/2 ... N/2`` in basis order."""
    n = _check_n(n)
    return np.arange(n + 1) - n / 2


@dataclass(frozen=True)
class DickeVector:
    n_particles: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        _check_n(self.n_particles)
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.n_particles + 1,):
            raise InvalidArgument(
                f"expected {self.n_particles + 1} amplitudes, got shape {amps.shape}"
            )
        norm = np.vdot(amps, amps).real
        if abs(norm - 1.0) > 1e-12:
            raise InvalidArgument(f"state is not normalized (norm^2 = {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def spin_down(cls, n: int) -> "DickeVector":
        amps = np.zeros(_check_n(n) + 1, dtype=complex)
        amps[0] = 1.0
        return cls(n, amps)

    @classmethod
    def basis(cls, n: int, m: float) -> "DickeVector":
        n = _check_n(n)
        k = m + n / 2
        if k != round(k) or not 0 <= k <= n:
            raise InvalidArgument(f"m={m} is not a projection for N={n}")
        amps = np.zeros(n + 1, dtype=complex)
        amps[int(round(k))] = 1.0
        return cls(n, amps)

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def expectation(self, op: "CollectiveOperator | np.ndarray") -> complex:
        mat = op.matrix if isinstance(op, CollectiveOperator) else op
        return np.vdot(self.amplitudes, mat @ self.amplitudes)


@dataclass(frozen=True)
class CollectiveOperator:
    axis: str
    n_particles: int
    matrix: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class SpectralCache:
    axis: str
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def _raising(n: int) -> np.ndarray:
    j = n / 2
    m = projections(n)[:-1]
    # <m+1|J+|m> sits just below the diagonal with ascending ordering
    return np.diag(np.sqrt(j * (j + 1) - m * (m + 1)), -1)


@lru_cache(maxsize=None)
def _operator_matrix(axis: str, n: int) -> np.ndarray:
    if axis == "z":
        mat = np.diag(projections(n)).astype(complex)
    else:
        jp = _raising(n)
        if axis == "x":
            mat = (0.5 * (jp + jp.T)).astype(complex)
        else:
            mat = -0.5j * (jp - jp.T)
    mat.setflags(write=False)
    return mat


def collective_operator(axis: str, n: int) -> CollectiveOperator:
    """Matrix of ``J_axis`` in the Dicke basis."""
    axis, n = _check_axis(axis), _check_n(n)
    return CollectiveOperator(axis, n, _operator_matrix(axis, n))


@lru_cache(maxsize=None)
def spectral_cache(axis: str, n: int) -> SpectralCache:
    axis, n = _check_axis(axis), _check_n(n)
    if axis == "z":
        vecs = np.eye(n + 1, dtype=complex)
        vals = projections(n)
    else:
        vals, vecs = np.linalg.eigh(_operator_matrix(axis, n))
        # the spectrum of every J_axis is exactly m = -N/2..N/2
        vals = np.round(vals * 2) / 2
    vals.setflags(write=False)
    vecs.setflags(write=False)
    return SpectralCache(axis, vals, vecs)


def _amps(state):
    if isinstance(state, DickeVector):
        return state.n_particles, state.amplitudes
    arr = np.asarray(state, dtype=complex)
    return arr.shape[0] - 1, arr


def _apply_diagonal_generator(state, axis: str, phases_of):
    n, amps = _amps(state)
    cache = spectral_cache(axis, n)
    phase = np.exp(-1j * phases_of(cache.eigenvalues))
    if amps.ndim == 2:
        phase = phase[:, None]
    if axis == "z":
        out = phase * amps
    else:
        v = cache.eigenvectors
        out = v @ (phase * (v.conj().T @ amps))
    if isinstance(state, DickeVector):
        # renormalize away ~1e-16 eigensolver drift so the invariant stays exact
        out = out / np.sqrt(np.vdot(out, out).real)
        return DickeVector(n, out)
    return out


def apply_rotation(state, axis: str, angle: float):
    """Apply ``exp(-i angle J_axis)``.

    ``state`` is a :class:`DickeVector` or a raw amplitude array; a 2-D array
    is treated as a batch of column states and returned as an array.
    """
    axis, angle = _check_axis(axis), _check_angle(angle)
    if angle == 0.0:
        return state
    return _apply_diagonal_generator(state, axis, lambda lam: angle * lam)


def apply_twist(state, axis: str, chi: float):
    """Apply the one-axis twist ``exp(-i chi J_axis^2)``."""
    axis, chi = _check_axis(axis), _check_angle(chi)
    if chi == 0.0:
        return state
    return _apply_diagonal_generator(state, axis, lambda lam: chi * lam**2)


def gate_matrix(kind: str, axis: str, angle: float, n: int) -> np.ndarray:
    """Dense unitary of a rotation (``kind='R'``) or twist (``kind='T'``)."""
    eye = np.eye(_check_n(n) + 1, dtype=complex)
    if kind == "R":
        return apply_rotation(eye, axis, angle)
    if kind == "T":
        return apply_twist(eye, axis, angle)
    raise InvalidArgument(f"gate kind must be 'R' or 'T', got {kind!r}")


def coherent_state(n: int, theta: float, phi: float) -> DickeVector:
    """Coherent spin state with Bloch polar angle ``theta`` (from +z) and azimuth ``phi``."""
    from scipy.special import gammaln

    n = _check_n(n)
    k = np.arange(n + 1)
    log_binom = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    with np.errstate(divide="ignore"):
        log_mag = 0.5 * log_binom + k * np.log(abs(c)) + (n - k) * np.log(abs(s))
    mag = np.exp(log_mag) * np.sign(c) ** k * np.sign(s) ** (n - k)
    amps = mag * np.exp(1j * (k - n / 2) * phi)
    amps = amps / np.linalg.norm(amps)
    return DickeVector(n, amps)


def spin_moments(state: DickeVector):
    """Mean spin vector and 3x3 symmetrized covariance matrix."""
    n = state.n_particles
    ops = [_operator_matrix(a, n) for a in AXES]
    psi = state.amplitudes
    applied = [op @ psi for op in ops]
    mean = np.array([np.vdot(psi, a).real for a in applied])
    cov = np.empty((3, 3))
    for i in range(3):
        for j in range(i, 3):
            val = np.vdot(applied[i], applied[j]).real - mean[i] * mean[j]
            cov[i, j] = cov[j, i] = val
    return mean, cov
