"""DIRECT (dividing rectangles) search for noisy cost evaluators.

Cells live in the unit hypercube spanned by the free dimensions of a
:class:`SearchBox`.  Each cell is represented by one evaluated centre.
Potentially optimal cells (lower-right convex hull of size vs. value) are
trisected along their longest sides.  With noisy evaluators, the ranking value
of a cell comes from a Gaussian-process meta-model, and extra shots are spent
on candidates whose order with respect to the incumbent is uncertain.  The
reported incumbent is always chosen from measured estimates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import InvalidArgument
from .constraints import Constraints, SearchBox, project_constraints
from .refine import allocate_refinement
from .surrogate import PeriodicGP, generator_periods


@dataclass(frozen=True)
class Evaluation:
    """One cost measurement: estimate, variance of the estimate, shots spent."""

    cost: float
    variance: float = 0.0
    shots: int = 0


@dataclass(frozen=True)
class TraceRecord:
    index: int
    params: tuple
    cost: float
    variance: float
    shots: int
    kind: str = "sample"

    def as_dict(self):
        return {"index": self.index, "params": list(self.params), "cost": self.cost,
                "variance": self.variance, "shots": self.shots, "kind": self.kind}


@dataclass(eq=False)
class Cell:
    center: np.ndarray
    levels: np.ndarray
    params: np.ndarray
    samples: list = field(default_factory=list)
    status: str = "active"

    @property
    def half_widths(self) -> np.ndarray:
        return 0.5 * 3.0 ** (-self.levels.astype(float))

    @property
    def size(self) -> float:
        return float(np.linalg.norm(self.half_widths))

    @property
    def shots(self) -> int:
        return int(sum(s.shots for s in self.samples))

    def estimate(self):
        """Pooled mean and variance of the mean over all samples of this cell."""
        costs = np.array([s.cost for s in self.samples])
        var = np.array([s.variance for s in self.samples])
        if np.any(var <= 0):
            exact = costs[var <= 0]
            return float(exact.mean()), 0.0
        w = 1.0 / var
        return float(w @ costs / w.sum()), float(1.0 / w.sum())


@dataclass(frozen=True)
class DirectConfig:
    max_evaluations: int = 2000
    max_iterations: int = 500
    epsilon: float = 1e-4
    min_level: int = 30
    confidence: float = 0.9
    batch: int = 50
    refine_fraction: float = 0.2
    refine_cap: int = 1000
    indifference: float = 0.0
    use_surrogate: bool = True
    surrogate_points: int = 200
    surrogate_refit: int = 25
    seed: int = 0


@dataclass
class OptimizeResult:
    params: np.ndarray
    cost: float
    variance: float
    trace: list
    complete: bool
    n_evaluations: int
    shots_used: int
    cells: list = field(repr=False, default_factory=list)

    def best_so_far(self) -> np.ndarray:
        """Incumbent cost after each trace record (non-increasing)."""
        return incumbent_curve(self.trace)


def incumbent_curve(trace) -> np.ndarray:
    best = np.inf
    out = []
    for rec in trace:
        if rec.cost < best:
            best = rec.cost
        out.append(best)
    return np.array(out)


def export_trace(trace, path) -> None:
    """Write one JSON object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in trace:
            fh.write(json.dumps(rec.as_dict()) + "\n")


def load_trace(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [TraceRecord(d["index"], tuple(d["params"]), d["cost"], d["variance"], d["shots"],
                            d.get("kind", "sample")) for d in map(json.loads, fh)]


def potentially_optimal(sizes, values, epsilon: float) -> list:
    """Indices on the lower-right convex hull of (size, value) passing the epsilon test."""
    sizes = np.asarray(sizes, dtype=float)
    values = np.asarray(values, dtype=float)
    f_min = values.min()
    # best value per distinct size
    order = np.lexsort((values, -sizes))
    picks = []
    seen = set()
    for i in order:
        key = round(sizes[i], 12)
        if key not in seen:
            seen.add(key)
            picks.append(i)
    # picks sorted by decreasing size; build the lower hull from the largest cell
    # down to the one holding the minimum value
    stop = min(picks, key=lambda i: (values[i], -sizes[i]))
    chain = picks[: picks.index(stop) + 1][::-1]  # increasing size
    hull = []
    for i in chain:
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (sizes[b] - sizes[a]) * (values[i] - values[a]) - (values[b] - values[a]) * (sizes[i] - sizes[a])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    out = []
    for k, i in enumerate(hull):
        if k + 1 < len(hull):
            j = hull[k + 1]
            slope = (values[j] - values[i]) / (sizes[j] - sizes[i])
            if values[i] - slope * sizes[i] > f_min - epsilon * abs(f_min):
                continue
        out.append(int(i))
    return out


class DirectOptimizer:
    def __init__(self, evaluator: Callable, box: SearchBox, shape, n_particles: int,
                 constraints: Constraints | None = None, budget: int = 100_000,
                 config: DirectConfig | None = None):
        if budget <= 0:
            raise InvalidArgument("budget must be positive")
        if box.dim != 3 * sum(shape):
            raise InvalidArgument("search box does not match the circuit shape")
        self.evaluator = evaluator
        self.box = box
        self.shape = tuple(shape)
        self.constraints = constraints
        self.budget = int(budget)
        self.config = config or DirectConfig()
        self.cells: list[Cell] = []
        self.trace: list[TraceRecord] = []
        self.shots_used = 0
        self.n_evaluations = 0
        self._free = box.free
        self._gp = PeriodicGP(generator_periods(self.shape, n_particles)[self._free])
        self._gp_fitted_at = -1
        self._noisy = False

    # -- evaluation -----------------------------------------------------
    def _params(self, u):
        x = self.box.from_unit(u)
        if self.constraints is not None:
            x = project_constraints(x, self.shape, self.constraints)
        return x

    def _measure(self, cell: Cell, shots=None, kind="sample") -> bool:
        if self.n_evaluations >= self.config.max_evaluations:
            return False
        expected = shots or getattr(self.evaluator, "nominal_shots", 0)
        if self.trace and self.shots_used + expected > self.budget:
            return False
        ev = self.evaluator(cell.params, shots) if shots else self.evaluator(cell.params)
        if not isinstance(ev, Evaluation):
            ev = Evaluation(float(ev))
        cell.samples.append(ev)
        self.shots_used += ev.shots
        self.n_evaluations += 1
        self._noisy = self._noisy or ev.variance > 0
        self.trace.append(TraceRecord(len(self.trace), tuple(map(float, cell.params)), float(ev.cost),
                                      float(ev.variance), int(ev.shots), kind))
        return True

    def _new_cell(self, center, levels):
        cell = Cell(np.asarray(center, float), np.asarray(levels, int), self._params(center))
        if not self._measure(cell):
            return None
        self.cells.append(cell)
        return cell

    # -- ranking --------------------------------------------------------
    def _rank_values(self, active):
        means = np.array([c.estimate()[0] for c in active])
        if not (self._noisy and self.config.use_surrogate) or len(self.cells) < 5:
            return means
        evaluated = [c for c in self.cells if c.samples]
        if len(evaluated) > self.config.surrogate_points:
            evaluated = sorted(evaluated, key=lambda c: c.estimate()[0])[: self.config.surrogate_points]
        x = np.array([c.params[self._free] for c in evaluated])
        est = np.array([c.estimate() for c in evaluated])
        refit = self._gp_fitted_at < 0 or len(self.cells) - self._gp_fitted_at >= self.config.surrogate_refit
        self._gp.fit(x, est[:, 0], est[:, 1], seed=self.config.seed, optimize_hyper=refit)
        if refit:
            self._gp_fitted_at = len(self.cells)
        return self._gp.predict(np.array([c.params[self._free] for c in active]))

    def _refine(self, candidates):
        cfg = self.config
        remaining = self.budget - self.shots_used
        cap = int(min(cfg.refine_cap, cfg.refine_fraction * remaining))
        if cap < cfg.batch or len(candidates) < 2:
            return
        est = np.array([c.estimate() for c in candidates])
        shots = np.array([max(c.shots, 1) for c in candidates])
        per_shot = est[:, 1] * shots
        alloc = allocate_refinement(est[:, 0], est[:, 1], shots, cfg.confidence, cap, cfg.batch,
                                    cfg.indifference)
        for cell, extra, v in zip(candidates, alloc, per_shot):
            if extra > 0 and v > 0:
                self._measure(cell, int(extra), kind="refine")

    # -- division -------------------------------------------------------
    def _divide(self, cell: Cell):
        levels = cell.levels
        longest = np.flatnonzero(levels == levels.min())
        delta = 3.0 ** (-(levels.min() + 1.0))
        probes = {}
        for d in longest:
            pair = []
            for sign in (-1, 1):
                c = cell.center.copy()
                c[d] += sign * delta
                pair.append((c, sign))
            probes[d] = pair
        children = {}
        for d in longest:
            made = []
            for c, sign in probes[d]:
                child = self._new_cell(c, levels.copy())
                if child is None:
                    return False
                made.append(child)
            children[d] = made
        # split along the dimension with the best probe first so it gets the biggest cell
        order = sorted(longest, key=lambda d: min(ch.estimate()[0] for ch in children[d]))
        new_levels = levels.copy()
        for d in order:
            new_levels[d] += 1
            for ch in children[d]:
                ch.levels = new_levels.copy()
        cell.levels = new_levels.copy()
        return True

    # -- main loop ------------------------------------------------------
    def run(self) -> OptimizeResult:
        cfg = self.config
        dim = int(self._free.sum())
        self._new_cell(np.full(dim, 0.5), np.zeros(dim, int))
        complete = True
        if dim == 0:
            return self._result(True)
        for _ in range(cfg.max_iterations):
            active = [c for c in self.cells if c.levels.min() < cfg.min_level]
            if not active:
                break
            values = self._rank_values(active)
            sizes = np.array([c.size for c in active])
            chosen = [active[i] for i in potentially_optimal(sizes, values, cfg.epsilon)]
            if self._noisy:
                incumbent = min(self.cells, key=lambda c: c.estimate()[0])
                pool = chosen + ([incumbent] if incumbent not in chosen else [])
                self._refine(pool)
            for cell in chosen:
                if not self._divide(cell):
                    complete = False
                    break
            if not complete:
                break
        return self._result(complete)

    def _result(self, complete):
        best = min(self.cells, key=lambda c: c.estimate()[0])
        mean, var = best.estimate()
        return OptimizeResult(best.params.copy(), mean, var, self.trace, complete, self.n_evaluations,
                              self.shots_used, self.cells)


def optimize(evaluator, box: SearchBox, shape, n_particles: int, constraints: Constraints | None = None,
             budget: int = 100_000, config: DirectConfig | None = None) -> OptimizeResult:
    """Minimize ``evaluator`` over ``box``.

    ``evaluator(params)`` or ``evaluator(params, shots)`` returns an
    :class:`Evaluation` (or a bare float for deterministic costs).  The run
    stops when the shot budget, the evaluation cap or the iteration cap is
    reached; ``complete`` is False if the budget ran out mid-iteration.
    """
    return DirectOptimizer(evaluator, box, shape, n_particles, constraints, budget, config).run()
