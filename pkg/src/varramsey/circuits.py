"""Variational Ramsey sequences and their outcome statistics.

The canonical sequence is::

    R_x(pi/2) U_De R_z(phi) U_En R_y(pi/2) |down...down>

with entangling layers ``R_x(rot) T_x(twist_2) T_z(twist_1)`` (``T_z`` acts
first) and decoding layers ``T_z(twist_1) T_x(twist_2) R_x(rot)`` (``R_x``
acts first).  Layer 1 is applied first in both circuits.  The experimental
form replaces every z-twist by a y-twist and imprints the phase with
``R_y(phi) = R_x(-pi/2) R_z(phi) R_x(pi/2)``; its outcome law is the
canonical one evaluated at ``-phi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .spin import DickeVector, apply_rotation, apply_twist, projections, InvalidArgument

HALF_PI = np.pi / 2
FORMS = ("canonical", "experimental")


@dataclass(frozen=True)
class LayerAngles:
    """Angles of one layer.  ``twist_1`` is the z-twist (y-twist in the experimental form)."""

    twist_1: float = 0.0
    twist_2: float = 0.0
    rotation: float = 0.0

    def as_tuple(self):
        return (self.twist_1, self.twist_2, self.rotation)


@dataclass(frozen=True)
class CircuitParams:
    n_en: int = 0
    n_de: int = 0
    entangling: tuple = ()
    decoding: tuple = ()
    form: str = "canonical"

    def __post_init__(self):
        ent = tuple(l if isinstance(l, LayerAngles) else LayerAngles(*l) for l in self.entangling)
        dec = tuple(l if isinstance(l, LayerAngles) else LayerAngles(*l) for l in self.decoding)
        if not ent and self.n_en:
            ent = (LayerAngles(),) * self.n_en
        if not dec and self.n_de:
            dec = (LayerAngles(),) * self.n_de
        if len(ent) != self.n_en or len(dec) != self.n_de:
            raise InvalidArgument(
                f"layer counts ({self.n_en}, {self.n_de}) do not match "
                f"{len(ent)} entangling / {len(dec)} decoding layers"
            )
        if self.form not in FORMS:
            raise InvalidArgument(f"form must be one of {FORMS}, got {self.form!r}")
        object.__setattr__(self, "entangling", ent)
        object.__setattr__(self, "decoding", dec)

    @property
    def shape(self):
        return (self.n_en, self.n_de)

    @property
    def n_params(self):
        return 3 * (self.n_en + self.n_de)

    def to_vector(self) -> np.ndarray:
        return np.array(
            [a for layer in self.entangling + self.decoding for a in layer.as_tuple()], dtype=float
        )

    @classmethod
    def from_vector(cls, shape, x, form="canonical") -> "CircuitParams":
        n_en, n_de = shape
        x = np.asarray(x, dtype=float).ravel()
        if x.size != 3 * (n_en + n_de):
            raise InvalidArgument(f"expected {3 * (n_en + n_de)} angles for shape {shape}, got {x.size}")
        layers = [LayerAngles(*map(float, x[3 * i : 3 * i + 3])) for i in range(n_en + n_de)]
        return cls(n_en, n_de, tuple(layers[:n_en]), tuple(layers[n_en:]), form)

    def with_vector(self, x) -> "CircuitParams":
        return CircuitParams.from_vector(self.shape, x, self.form)

    def with_form(self, form: str) -> "CircuitParams":
        return CircuitParams(self.n_en, self.n_de, self.entangling, self.decoding, form)

    def parameter_names(self):
        return parameter_names(self.shape, self.form)

    def is_twist(self) -> np.ndarray:
        """Boolean mask over :meth:`to_vector` marking twisting angles."""
        return np.tile([True, True, False], self.n_en + self.n_de)


def parameter_names(shape, form="canonical"):
    t1 = "Tz" if form == "canonical" else "Ty"
    n_en, n_de = shape
    names = []
    for k in range(n_en):
        names += [f"en{k + 1}.{t1}", f"en{k + 1}.Tx", f"en{k + 1}.Rx"]
    for k in range(n_de):
        names += [f"de{k + 1}.{t1}", f"de{k + 1}.Tx", f"de{k + 1}.Rx"]
    return names


@dataclass(frozen=True)
class OutcomeTable:
    n_particles: int
    phases: np.ndarray = field(repr=False)
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        phases = np.asarray(self.phases, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (phases.size, self.n_particles + 1):
            raise InvalidArgument(
                f"probability table shape {probs.shape} does not match "
                f"{phases.size} phases x {self.n_particles + 1} outcomes"
            )
        if probs.size and (probs.min() < -1e-12 or probs.max() > 1 + 1e-12):
            raise InvalidArgument("probabilities must lie in [0, 1]")
        if probs.size and np.abs(probs.sum(axis=1) - 1).max() > 1e-10:
            raise InvalidArgument("each row of the outcome table must sum to 1")
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "probs", np.clip(probs, 0.0, 1.0))

    @property
    def outcomes(self) -> np.ndarray:
        return projections(self.n_particles)

    def mean_m(self) -> np.ndarray:
        return self.probs @ self.outcomes

    def row(self, phase: float) -> np.ndarray:
        idx = np.flatnonzero(np.isclose(self.phases, phase, rtol=0, atol=1e-12))
        if idx.size == 0:
            raise KeyError(phase)
        return self.probs[idx[0]]


# ---------------------------------------------------------------------------
# sequence assembly


def _twist_axis(form):
    return "z" if form == "canonical" else "y"


def encoded_state(params: CircuitParams, n: int) -> np.ndarray:
    """Amplitudes right before the phase imprint, in the frame where the
    phase acts as ``exp(-i phi J_z)``."""
    ax1 = _twist_axis(params.form)
    psi = DickeVector.spin_down(n).amplitudes
    psi = apply_rotation(psi, "y", HALF_PI)
    for layer in params.entangling:
        psi = apply_twist(psi, ax1, layer.twist_1)
        psi = apply_twist(psi, "x", layer.twist_2)
        psi = apply_rotation(psi, "x", layer.rotation)
    if params.form == "experimental":
        psi = apply_rotation(psi, "x", HALF_PI)
    return psi


def decoding_matrix(params: CircuitParams, n: int) -> np.ndarray:
    """Unitary mapping the phase-imprinted state to the measured state."""
    ax1 = _twist_axis(params.form)
    mat = np.eye(n + 1, dtype=complex)
    if params.form == "experimental":
        mat = apply_rotation(mat, "x", -HALF_PI)
    for layer in params.decoding:
        mat = apply_rotation(mat, "x", layer.rotation)
        mat = apply_twist(mat, "x", layer.twist_2)
        mat = apply_twist(mat, ax1, layer.twist_1)
    if params.form == "canonical":
        mat = apply_rotation(mat, "x", HALF_PI)
    return mat


def _check_shape(params: CircuitParams, n: int):
    if not isinstance(params, CircuitParams):
        raise InvalidArgument("params must be a CircuitParams instance")
    if int(n) != n or n < 1:
        raise InvalidArgument(f"number of particles must be a positive integer, got {n!r}")


def final_amplitudes(params: CircuitParams, n: int, phases) -> np.ndarray:
    """Measured-basis amplitudes, one column per phase."""
    _check_shape(params, n)
    phases = np.atleast_1d(np.asarray(phases, dtype=float))
    if not np.all(np.isfinite(phases)):
        raise InvalidArgument("phases must be finite")
    m = projections(n)
    psi = encoded_state(params, n)
    batch = np.exp(-1j * np.outer(m, phases)) * psi[:, None]
    return decoding_matrix(params, n) @ batch


def ramsey_state(params: CircuitParams, n: int, phase: float) -> DickeVector:
    amps = final_amplitudes(params, n, [phase])[:, 0]
    return DickeVector(n, amps / np.linalg.norm(amps))


def outcome_table(params: CircuitParams, n: int, phases: Sequence[float]) -> OutcomeTable:
    phases = np.sort(np.atleast_1d(np.asarray(phases, dtype=float)))
    probs = np.abs(final_amplitudes(params, n, phases).T) ** 2
    probs /= probs.sum(axis=1, keepdims=True)
    return OutcomeTable(n, phases, probs)


def expectation_jz(params: CircuitParams, n: int, phase) -> float | np.ndarray:
    probs = np.abs(final_amplitudes(params, n, phase)) ** 2
    vals = projections(n) @ probs
    return float(vals[0]) if np.ndim(phase) == 0 else vals


def css(form="canonical") -> CircuitParams:
    """The (0, 0) coherent-spin-state interferometer."""
    return CircuitParams(0, 0, form=form)
