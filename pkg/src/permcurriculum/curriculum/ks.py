"""Two-sample Kolmogorov-Smirnov test and the group-count check built on it."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import RejectedInput
from .grouping import Grouping
from .state import NetworkStateMatrix


def kolmogorov_sf(lam: float) -> float:
    """P(K > lam) for the limiting Kolmogorov distribution."""
    if lam < 1e-8:
        return 1.0
    if lam < 1.18:
        # small-lam form converges faster here
        w = math.sqrt(2 * math.pi) / lam
        s = sum(math.exp(-((2 * k - 1) ** 2) * math.pi ** 2 / (8 * lam * lam)) for k in range(1, 20))
        return max(0.0, min(1.0, 1.0 - w * s))
    total, k = 0.0, 1
    while True:
        term = math.exp(-2.0 * k * k * lam * lam)
        total += term if k % 2 else -term
        if term < 1e-17:
            break
        k += 1
    return max(0.0, min(1.0, 2.0 * total))


def ks_statistic(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / len(a)
    cdf_b = np.searchsorted(b, grid, side="right") / len(b)
    return float(np.abs(cdf_a - cdf_b).max())


def ks_two_sample(a, b) -> tuple[float, float]:
    """Statistic ``D`` and asymptotic p-value (effective size n_a n_b / (n_a + n_b))."""
    if len(a) == 0 or len(b) == 0:
        raise RejectedInput("KS test needs two non-empty samples")
    d = ks_statistic(a, b)
    en = math.sqrt(len(a) * len(b) / (len(a) + len(b)))
    # the plain limiting form; small-sample corrections overshoot a
    # permutation test at the sample sizes used here
    return d, kolmogorov_sf(en * d)


@dataclass
class GroupDiagnostic:
    pvalues: np.ndarray
    alpha: float
    similar_pairs: list[tuple[int, int]]

    @property
    def verdict(self) -> str:
        return "too high" if self.similar_pairs else "ok"


def group_count_diagnostic(state: NetworkStateMatrix, grouping: Grouping, alpha: float = 0.01) -> GroupDiagnostic:
    """Pairwise KS tests between the ratio distributions of every pair of groups.

    Any pair whose p-value reaches ``alpha`` cannot be told apart, which
    means the group count is higher than the state supports.
    """
    k = grouping.n_groups
    samples = [state.ratios[grouping.assignment == j].ravel() for j in range(k)]
    p = np.ones((k, k))
    similar = []
    for i in range(k):
        for j in range(i + 1, k):
            p[i, j] = p[j, i] = ks_two_sample(samples[i], samples[j])[1]
            if p[i, j] >= alpha:
                similar.append((i, j))
    return GroupDiagnostic(p, alpha, similar)
