"""Budget allocation for repeated noisy evaluations (OCBA-style)."""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

from ..errors import InvalidArgument


def misselection_bound(means, variances, indifference: float = 0.0) -> float:
    """Bonferroni bound on the probability that the apparent best is not the true best.

    ``variances`` are variances of the mean estimates.  Gaps smaller than
    ``indifference`` are treated as equal to it.
    """
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    b = int(np.argmin(means))
    total = 0.0
    for i in range(means.size):
        if i == b:
            continue
        gap = max(means[i] - means[b], indifference)
        sd = np.sqrt(variances[i] + variances[b])
        if sd == 0:
            total += 0.0 if gap > 0 else 0.5
        else:
            total += float(ndtr(-gap / sd))
    return total


def _projected(variances, shots, extra):
    return variances * shots / (shots + extra)


def allocate_refinement(means, variances, shots, confidence: float = 0.9, budget: int = 1000,
                        batch: int = 50, indifference: float = 0.0) -> np.ndarray:
    """Extra shots per candidate so the incumbent is identified with the requested confidence.

    Variances shrink as ``1/shots``.  Batches go greedily to the candidate
    whose extra measurements lower the mis-selection bound most, until the
    bound drops below ``1 - confidence`` or ``budget`` is spent; a pairwise
    exchange pass then rebalances the chosen total.
    """
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    shots = np.asarray(shots, dtype=float)
    if means.size < 2:
        return np.zeros(means.size, dtype=int)
    if not (means.shape == variances.shape == shots.shape):
        raise InvalidArgument("means, variances and shots must have equal length")
    if np.any(variances < 0) or np.any(shots <= 0):
        raise InvalidArgument("variances must be non-negative and shot counts positive")
    if not 0 < confidence < 1:
        raise InvalidArgument("confidence must lie in (0, 1)")
    target = 1.0 - confidence
    extra = np.zeros(means.size)

    def bound(alloc):
        return misselection_bound(means, _projected(variances, shots, alloc), indifference)

    current = bound(extra)
    n_batches = int(budget // batch)
    for _ in range(n_batches):
        if current <= target:
            break
        trials = []
        for i in range(means.size):
            alloc = extra.copy()
            alloc[i] += batch
            trials.append(bound(alloc))
        i = int(np.argmin(trials))
        extra[i] += batch
        current = trials[i]
    # exchange pass: move single batches while the bound improves
    improved = True
    while improved:
        improved = False
        for i in range(means.size):
            if extra[i] < batch:
                continue
            for j in range(means.size):
                if i == j:
                    continue
                alloc = extra.copy()
                alloc[i] -= batch
                alloc[j] += batch
                val = bound(alloc)
                if val < current - 1e-15:
                    extra, current, improved = alloc, val, True
    return extra.astype(int)
