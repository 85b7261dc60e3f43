"""Twisting-angle restrictions and search boxes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument

TWIST_MIN = np.pi / 160
TWIST_MAX = np.pi / 8


def twist_mask(shape) -> np.ndarray:
    """Boolean mask over a parameter vector marking twisting angles."""
    return np.tile([True, True, False], sum(shape))


@dataclass(frozen=True)
class Constraints:
    twist_min: float = TWIST_MIN
    twist_max: float = TWIST_MAX
    rotation_skip: float = 0.0
    drop_small: bool = True

    def __post_init__(self):
        if not 0 < self.twist_min < self.twist_max:
            raise InvalidArgument("need 0 < twist_min < twist_max")
        if self.rotation_skip < 0:
            raise InvalidArgument("rotation skip threshold must be non-negative")


def project_twist(chi: float, c: Constraints) -> float:
    """Map one twisting angle into ``{0} U [twist_min, twist_max]``."""
    if chi < c.twist_min:
        if c.drop_small and chi < c.twist_min / 2:
            return 0.0
        return float(c.twist_min)
    return float(min(chi, c.twist_max))


def project_constraints(x, shape, constraints: Constraints | None = None) -> np.ndarray:
    """Apply the twisting window and the rotation skip rule to a parameter vector."""
    c = Constraints() if constraints is None else constraints
    x = np.array(x, dtype=float).ravel()
    mask = twist_mask(shape)
    if x.size != mask.size:
        raise InvalidArgument(f"expected {mask.size} parameters for shape {tuple(shape)}")
    for i in np.flatnonzero(mask):
        x[i] = project_twist(x[i], c)
    rot = ~mask
    x[rot] = np.where(np.abs(x[rot]) < c.rotation_skip, 0.0, x[rot])
    return x


@dataclass(frozen=True)
class SearchBox:
    lower: np.ndarray
    upper: np.ndarray
    provenance: str = "user"

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).ravel()
        hi = np.asarray(self.upper, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise InvalidArgument("lower and upper bounds differ in length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InvalidArgument("search box bounds must be finite")
        if np.any(lo > hi):
            raise InvalidArgument("lower bound exceeds upper bound")
        if self.provenance not in ("theory-scaled", "user"):
            raise InvalidArgument("provenance must be 'theory-scaled' or 'user'")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def free(self) -> np.ndarray:
        """Dimensions with non-zero width; the rest are held at their bound."""
        return self.width > 0

    def to_unit(self, x):
        x = np.asarray(x, dtype=float)
        free = self.free
        return (x[..., free] - self.lower[free]) / self.width[free]

    def from_unit(self, u):
        x = self.lower.copy()
        x[self.free] = self.lower[self.free] + np.asarray(u, dtype=float) * self.width[self.free]
        return x

    def contains(self, x, tol=1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))


def box_from_theory(x_theory, low: float = 0.5, high: float = 1.5, displacement: float = 0.1,
                    rng=None, seed: int | None = 0) -> SearchBox:
    """Box spanning ``low..high`` times each theory value, shifted at random.

    Each dimension is displaced uniformly by up to ``displacement`` of its
    width so the optimum does not sit at the box centre.
    """
    x = np.asarray(x_theory, dtype=float).ravel()
    if not 0 <= low <= high:
        raise InvalidArgument("need 0 <= low <= high")
    a, b = low * x, high * x
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    rng = np.random.default_rng(seed) if rng is None else rng
    shift = rng.uniform(-displacement, displacement, size=x.size) * (hi - lo)
    return SearchBox(lo + shift, hi + shift, "theory-scaled")
