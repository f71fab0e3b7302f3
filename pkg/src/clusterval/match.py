"""One-to-one matching of validation clusters to discovery clusters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cluster import ClusterModel
from .core import Partition, contingency_table, euclidean_distances
from .errors import InvalidMethodError


def _hungarian(cost: np.ndarray):
    """Minimum-cost perfect matching on a square matrix (shortest augmenting path).

    Returns ``col_of_row`` with one column index per row.
    """
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=int)  # p[j]: row matched to column j (1-based)
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = np.inf
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col_of_row = np.empty(n, dtype=int)
    for j in range(1, n + 1):
        col_of_row[p[j] - 1] = j - 1
    return col_of_row


def _optimum(cost):
    if cost.shape[0] == 0:
        return 0.0
    cols = _hungarian(cost)
    return float(cost[np.arange(cost.shape[0]), cols].sum())


def solve_assignment(cost) -> tuple[np.ndarray, float]:
    """Exact minimum-cost assignment for a square matrix.

    Among equally good assignments the lexicographically smallest column
    vector is returned.
    """
    cost = np.asarray(cost, dtype=float)
    n = cost.shape[0]
    if cost.shape != (n, n):
        raise ValueError("cost matrix must be square")
    best = _optimum(cost)
    tol = 1e-9 * (1.0 + abs(best))
    rows = list(range(n))
    free = list(range(n))
    cols = np.empty(n, dtype=int)
    fixed = 0.0
    for r in rows:
        rest_rows = rows[r + 1:]
        for c in free:
            rest_cols = [x for x in free if x != c]
            sub = cost[np.ix_(rest_rows, rest_cols)]
            if fixed + cost[r, c] + _optimum(sub) <= best + tol:
                cols[r] = c
                fixed += cost[r, c]
                free = rest_cols
                break
    return cols, float(cost[np.arange(n), cols].sum())


@dataclass(frozen=True)
class ClusterMatching:
    """Validation-cluster to discovery-cluster pairs, 1-based labels."""

    assignment: tuple  # ((validation_cluster, discovery_cluster), ...)
    objective_value: float
    strategy: str
    contributions: tuple = ()
    unpaired_validation: tuple = ()
    unpaired_discovery: tuple = ()

    def as_dict(self) -> dict:
        return dict(self.assignment)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "objective_value": self.objective_value,
            "pairs": [[v, d, c] for (v, d), c in zip(self.assignment, self.contributions)],
            "unpaired_validation": list(self.unpaired_validation),
            "unpaired_discovery": list(self.unpaired_discovery),
        }


def _match(cost, strategy, sign):
    """Pad to square, solve, and translate back to labelled pairs."""
    k2, k1 = cost.shape
    m = max(k1, k2)
    padded = np.zeros((m, m))
    padded[:k2, :k1] = cost
    cols, _ = solve_assignment(padded)
    pairs, contrib = [], []
    unpaired_v, used_d = [], set()
    for r in range(k2):
        c = int(cols[r])
        if c < k1:
            pairs.append((r + 1, c + 1))
            contrib.append(float(sign * cost[r, c]))
            used_d.add(c + 1)
        else:
            unpaired_v.append(r + 1)
    unpaired_d = tuple(j for j in range(1, k1 + 1) if j not in used_d)
    return ClusterMatching(tuple(pairs), float(sum(contrib)), strategy, tuple(contrib),
                           tuple(unpaired_v), unpaired_d)


def match_by_centroids(model1: ClusterModel, model2: ClusterModel) -> ClusterMatching:
    """Pair clusters of ``model2`` (validation) with those of ``model1`` so the
    summed Euclidean distance between matched centres is minimal.

    Centres are compared in raw data units; medoids stand in for centroids.
    """
    c1, c2 = model1.raw_centroids(), model2.raw_centroids()
    if c1 is None or c2 is None:
        raise InvalidMethodError("centroid matching needs centroids or feature-space medoids")
    if c1.shape[1] != c2.shape[1]:
        raise InvalidMethodError("centroids live in different variable spaces")
    return _match(euclidean_distances(c2, c1), "centroid_distance", 1.0)


def match_by_cost(cost) -> ClusterMatching:
    """Matching on an explicit validation-by-discovery distance matrix."""
    return _match(np.asarray(cost, dtype=float), "centroid_distance", 1.0)


def match_by_intersection(c2md: Partition, c2tf: Partition) -> ClusterMatching:
    """Pair clusters of ``c2md`` with those of ``c2tf`` maximizing total overlap.

    Since ``c2tf`` clusters correspond one-to-one to discovery clusters, the
    pairs link method-based validation clusters to discovery clusters.
    """
    table = contingency_table(c2md, c2tf).astype(float)
    return _match(-table, "intersection_via_transfer", -1.0)
