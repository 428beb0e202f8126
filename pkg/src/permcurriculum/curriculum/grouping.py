"""k-means grouping of permutations and the per-group summary fed to the policy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import RejectedInput
from ..nncore import make_rng
from .state import NetworkStateMatrix


@dataclass
class Grouping:
    assignment: np.ndarray  # permutation index -> group id
    centroids: np.ndarray
    inertia: float

    @property
    def n_groups(self) -> int:
        return len(self.centroids)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_groups)

    def members(self, group: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == group)


def _sq_dists(X, C):
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _init_centers(X, k, rng):
    """k-means++ seeding; falls back to a uniform unused row when all mass is zero."""
    n = len(X)
    chosen = [int(rng.integers(n))]
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        u = rng.random()
        total = d2.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(d2) / total, u, side="right"))
            idx = min(idx, n - 1)
        else:
            free = np.setdiff1d(np.arange(n), chosen)
            idx = int(free[min(int(u * len(free)), len(free) - 1)])
        chosen.append(idx)
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return X[chosen].copy()


def _repair(X, labels, k):
    """Fill empty clusters by moving the farthest member out of the largest cluster."""
    labels = labels.copy()
    while True:
        sizes = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(sizes == 0)
        if len(empty) == 0:
            return labels
        big = int(np.argmax(sizes))
        members = np.flatnonzero(labels == big)
        centroid = X[members].mean(axis=0)
        far = members[int(np.argmax(((X[members] - centroid) ** 2).sum(axis=1)))]
        labels[far] = empty[0]


def _lloyd(X, k, rng, max_iter, tol):
    centers = _init_centers(X, k, rng)
    for _ in range(max_iter):
        labels = _repair(X, _sq_dists(X, centers).argmin(axis=1), k)
        new = np.stack([X[labels == j].mean(axis=0) for j in range(k)])
        shift = float(np.abs(new - centers).max())
        centers = new
        if shift < tol:
            break
    labels = _repair(X, _sq_dists(X, centers).argmin(axis=1), k)
    centers = np.stack([X[labels == j].mean(axis=0) for j in range(k)])
    inertia = float(((X - centers[labels]) ** 2).sum())
    return labels, centers, inertia


def kmeans(X: np.ndarray, k: int, seed: int = 0, n_init: int = 10, max_iter: int = 100,
           tol: float = 1e-9) -> Grouping:
    X = np.asarray(X, dtype=np.float64)
    if not 1 <= k <= len(X):
        raise RejectedInput(f"cannot form {k} groups from {len(X)} rows")
    rng = make_rng(seed)
    best = None
    for _ in range(n_init):
        labels, centers, inertia = _lloyd(X, k, rng, max_iter, tol)
        if best is None or inertia < best[2] - 1e-12:
            best = (labels, centers, inertia)
    return Grouping(best[0].astype(np.int64), best[1], best[2])


def group_permutations(state: NetworkStateMatrix, n_groups: int, seed: int = 0) -> Grouping:
    """Cluster the rows of the state matrix (one row per permutation)."""
    if n_groups > state.ratios.shape[0]:
        raise RejectedInput(f"{n_groups} groups requested for {state.ratios.shape[0]} permutations")
    return kmeans(state.ratios, n_groups, seed=seed)


@dataclass
class GroupedState:
    """Per-group (normalised size, median ratio), ordered by ascending median.

    ``order[j]`` is the grouping's group id behind action j, so action 0 is
    always the group the network currently finds hardest.
    """

    sizes: np.ndarray
    medians: np.ndarray
    order: np.ndarray

    def vector(self) -> np.ndarray:
        return np.column_stack([self.sizes, self.medians]).reshape(-1)

    def pairs(self) -> list[tuple[float, float]]:
        return [(float(s), float(m)) for s, m in zip(self.sizes, self.medians)]

    def __len__(self):
        return len(self.sizes)


def aggregate_state(state: NetworkStateMatrix, grouping: Grouping) -> GroupedState:
    ratios = state.ratios
    if len(grouping.assignment) != ratios.shape[0]:
        raise RejectedInput("grouping does not cover every permutation")
    k = grouping.n_groups
    sizes = np.bincount(grouping.assignment, minlength=k) / ratios.shape[0]
    medians = np.array([np.median(ratios[grouping.assignment == j]) if sizes[j] > 0 else np.nan
                        for j in range(k)])
    order = np.argsort(medians, kind="stable")
    return GroupedState(sizes[order], medians[order], order)


def action_members(grouping: Grouping, s_hat: GroupedState, action: int) -> np.ndarray:
    return grouping.members(int(s_hat.order[action]))


def perm_to_action(grouping: Grouping, s_hat: GroupedState) -> np.ndarray:
    """Action index of every permutation under the canonical group order."""
    rank = np.empty(len(s_hat.order), dtype=np.int64)
    rank[s_hat.order] = np.arange(len(s_hat.order))
    return rank[grouping.assignment]
