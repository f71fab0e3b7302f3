"""Clustering algorithms usable as Step-1 methods.

Each algorithm returns a :class:`ClusterModel` carrying the representation its
natural assignment rule needs: centroids (k-means), medoids (PAM) or a merge
trace (hierarchical). Feature data is turned into Euclidean dissimilarities
where an algorithm needs them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (
    ClusteringMethod,
    Dataset,
    DissimilarityDataset,
    FeatureDataset,
    Partition,
    StandardizationParams,
    canonicalize,
    standardize,
    to_dissimilarity,
)
from .errors import InvalidDataError, InvalidKError, InvalidMethodError


@dataclass(frozen=True, eq=False)
class ClusterModel:
    method: ClusteringMethod
    partition: Partition
    centroids: Optional[np.ndarray] = None
    medoid_ids: Optional[tuple] = None
    merge_trace: Optional[tuple] = None
    standardization: Optional[StandardizationParams] = None
    # preprocessed training data; needed by the knn/medoid transfer rules
    data: Optional[Dataset] = field(default=None, repr=False)
    objective: Optional[float] = None

    @property
    def k(self) -> int:
        return self.partition.k

    def raw_centroids(self) -> Optional[np.ndarray]:
        """Cluster centres in the units of the unpreprocessed data.

        Medoid coordinates stand in for centroids when the model is a PAM fit
        on feature data.
        """
        if self.centroids is not None:
            c = np.asarray(self.centroids)
        elif self.medoid_ids is not None and isinstance(self.data, FeatureDataset):
            pos = {o: i for i, o in enumerate(self.data.object_ids)}
            c = self.data.values[[pos[m] for m in self.medoid_ids]]
        else:
            return None
        if self.standardization is not None:
            c = c * np.asarray(self.standardization.sds) + np.asarray(self.standardization.means)
        return c

    def __eq__(self, other):
        if not isinstance(other, ClusterModel):
            return NotImplemented

        def arr_eq(a, b):
            if a is None or b is None:
                return a is b
            return np.array_equal(a, b)

        return (self.method == other.method and self.partition == other.partition
                and arr_eq(self.centroids, other.centroids)
                and self.medoid_ids == other.medoid_ids
                and self.merge_trace == other.merge_trace
                and self.standardization == other.standardization)

    __hash__ = None

    def to_dict(self) -> dict:
        out = {
            "method": self.method.to_dict(),
            "object_ids": list(self.partition.object_ids),
            "labels": self.partition.labels.tolist(),
            "k": self.k,
        }
        if self.centroids is not None:
            out["centroids"] = np.asarray(self.centroids).tolist()
        if self.medoid_ids is not None:
            out["medoid_ids"] = list(self.medoid_ids)
        if self.merge_trace is not None:
            out["merge_trace"] = [list(m) for m in self.merge_trace]
        if self.standardization is not None:
            out["standardization"] = self.standardization.to_dict()
        if self.objective is not None:
            out["objective"] = self.objective
        return out

    @classmethod
    def from_dict(cls, d: dict, data: Optional[Dataset] = None) -> "ClusterModel":
        """Rebuild a model; ``data`` is the raw training data, if available."""
        std = d.get("standardization")
        std = StandardizationParams.from_dict(std) if std else None
        part = Partition(d["labels"], d["k"], d["object_ids"])
        if data is not None:
            if tuple(data.object_ids) != part.object_ids:
                data = data.take_objects(part.object_ids)
            if std is not None:
                data = std.apply(data)
        cents = d.get("centroids")
        trace = d.get("merge_trace")
        return cls(
            ClusteringMethod.from_dict(d["method"]),
            part,
            np.asarray(cents, dtype=float) if cents is not None else None,
            tuple(d["medoid_ids"]) if d.get("medoid_ids") is not None else None,
            tuple(tuple(m) for m in trace) if trace is not None else None,
            std,
            data,
            d.get("objective"),
        )


def _check_k(k, n):
    if k > n:
        raise InvalidKError(f"k={k} exceeds the number of objects ({n})")


def _prepare(data: Dataset, method: ClusteringMethod):
    if method.preprocessing == "standardize":
        if not isinstance(data, FeatureDataset):
            raise InvalidMethodError("standardization needs feature data")
        return standardize(data)
    return data, None


# ---------------------------------------------------------------------------
# k-means


def _sqdist(x, c):
    diff = x[:, None, :] - c[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _kmeanspp(x, k, rng):
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sqdist(x, x[chosen]).min(axis=1)
    while len(chosen) < k:
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            # all remaining points coincide with a centre
            free = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(free))
        chosen.append(nxt)
        d2 = np.minimum(d2, _sqdist(x, x[[nxt]])[:, 0])
    return x[chosen].copy()


def _fill_empty(labels, d2, k):
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        own = d2[np.arange(len(labels)), labels]
        own = np.where(counts[labels] > 1, own, -1.0)
        i = int(np.argmax(own))
        counts[labels[i]] -= 1
        labels[i] = j
        counts[j] = 1
    return labels


def _means(x, labels, k):
    sums = np.zeros((k, x.shape[1]))
    np.add.at(sums, labels, x)
    return sums / np.bincount(labels, minlength=k)[:, None]


def _lloyd(x, k, rng, max_iter):
    centers = _kmeanspp(x, k, rng)
    labels = None
    for _ in range(max_iter):
        d2 = _sqdist(x, centers)
        new = _fill_empty(np.argmin(d2, axis=1), d2, k)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = _means(x, labels, k)
    wss = float(((x - centers[labels]) ** 2).sum())
    return labels, centers, wss


def kmeans(data: FeatureDataset, method: ClusteringMethod) -> ClusterModel:
    """Lloyd's algorithm from k-means++ seeds, best of ``n_restarts`` runs."""
    if method.algorithm != "kmeans":
        raise InvalidMethodError("kmeans() called with a non-kmeans method")
    if not isinstance(data, FeatureDataset):
        raise InvalidMethodError("kmeans needs feature data")
    _check_k(method.k, data.n_objects)
    prepared, params = _prepare(data, method)
    x = prepared.values
    best = None
    for r in range(method.n_restarts):
        rng = np.random.default_rng(np.random.SeedSequence(method.seed, spawn_key=(r,)))
        labels, centers, wss = _lloyd(x, method.k, rng, method.max_iter)
        # strict < keeps the lowest restart index on ties
        if best is None or wss < best[2]:
            best = (labels, centers, wss)
    labels, centers, wss = best
    part = canonicalize(Partition(labels + 1, method.k, data.object_ids))
    order = [int(labels[part.members(j)[0]]) for j in range(1, part.k + 1)]
    return ClusterModel(method, part, centroids=centers[order], standardization=params,
                        data=prepared, objective=wss)


# ---------------------------------------------------------------------------
# hierarchical


def _agglomerate(d: np.ndarray, linkage: str):
    """Naive Lance-Williams agglomeration.

    Returns merges as (slot_i, slot_j, height) and the scipy-style trace with
    cluster ids n, n+1, ... for merged clusters. Ties go to the smallest
    (i, j) slot pair.
    """
    n = d.shape[0]
    D = np.array(d, dtype=float)
    np.fill_diagonal(D, np.inf)
    upper = np.triu(np.ones((n, n), dtype=bool), 1)
    size = np.ones(n)
    cid = list(range(n))
    merges, trace = [], []
    for step in range(n - 1):
        flat = np.where(upper, D, np.inf).argmin()
        i, j = divmod(int(flat), n)
        h = float(D[i, j])
        if linkage == "single":
            new = np.minimum(D[i], D[j])
        elif linkage == "complete":
            new = np.maximum(D[i], D[j])
        else:
            new = (size[i] * D[i] + size[j] * D[j]) / (size[i] + size[j])
        D[i, :] = new
        D[:, i] = new
        D[j, :] = np.inf
        D[:, j] = np.inf
        D[i, i] = np.inf
        size[i] += size[j]
        merges.append((i, j, h))
        trace.append((cid[i], cid[j], h))
        cid[i] = n + step
    return merges, trace


def _cut(merges, n, k):
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j, _ in merges[: n - k]:
        parent[find(j)] = find(i)
    return [find(a) for a in range(n)]


def hierarchical(data: Dataset, method: ClusteringMethod) -> ClusterModel:
    """Agglomerative clustering cut at ``method.k`` clusters."""
    if method.algorithm != "hierarchical":
        raise InvalidMethodError("hierarchical() called with a non-hierarchical method")
    _check_k(method.k, data.n_objects)
    prepared, params = _prepare(data, method)
    d = to_dissimilarity(prepared).d
    merges, trace = _agglomerate(d, method.linkage)
    roots = _cut(merges, d.shape[0], method.k)
    part = canonicalize(Partition(np.unique(roots, return_inverse=True)[1] + 1,
                                  None, data.object_ids))
    return ClusterModel(method, part, merge_trace=tuple(trace), standardization=params,
                        data=prepared)


# ---------------------------------------------------------------------------
# PAM


def _pam_cost(d, medoids):
    return float(d[:, medoids].min(axis=1).sum())


def _pam_build(d, k):
    n = d.shape[0]
    medoids = [int(np.argmin(d.sum(axis=0)))]
    nearest = d[:, medoids[0]].copy()
    while len(medoids) < k:
        gain = np.maximum(nearest[:, None] - d, 0).sum(axis=0)
        gain[medoids] = -np.inf
        h = int(np.argmax(gain))
        medoids.append(h)
        nearest = np.minimum(nearest, d[:, h])
    return medoids


def _pam_swap(d, medoids, max_swaps=10_000):
    n = d.shape[0]
    k = len(medoids)
    medoids = sorted(medoids)
    for _ in range(max_swaps):
        if k == n:
            break
        dm = d[:, medoids]
        order = np.argsort(dm, axis=1, kind="stable")
        near = dm[np.arange(n), order[:, 0]]
        second = dm[np.arange(n), order[:, 1]] if k > 1 else np.full(n, np.inf)
        onehot = np.zeros((n, k))
        onehot[np.arange(n), order[:, 0]] = 1.0
        # change in cost when medoid slot i is replaced by object h
        m1 = np.minimum(d, near[:, None]) - near[:, None]
        m2 = np.minimum(d, second[:, None]) - near[:, None]
        delta = m1.sum(axis=0)[None, :] + onehot.T @ (m2 - m1)
        delta[:, medoids] = np.inf
        flat = int(np.argmin(delta))
        i, h = divmod(flat, n)
        cost = near.sum()
        if not delta[i, h] < -1e-10 * max(1.0, cost):
            break
        medoids[i] = h
        medoids.sort()
    return medoids


# SWAP can stop in a local optimum; small problems are settled exactly
EXACT_SUBSET_LIMIT = 2000


def _pam_exact(d, medoids):
    n, k = d.shape[0], len(medoids)
    if k == n or math.comb(n, k) > EXACT_SUBSET_LIMIT:
        return medoids
    best, best_cost = medoids, _pam_cost(d, medoids)
    for cand in itertools.combinations(range(n), k):
        c = _pam_cost(d, list(cand))
        if c < best_cost - 1e-10 * max(1.0, best_cost):
            best, best_cost = list(cand), c
    return best


def _assign_to_medoids(d, medoids):
    labels = np.argmin(d[:, medoids], axis=1)
    labels[medoids] = np.arange(len(medoids))
    return labels


def pam(data: Dataset, method: ClusteringMethod) -> ClusterModel:
    """k-medoids by BUILD then SWAP until no swap lowers total dissimilarity."""
    if method.algorithm != "pam":
        raise InvalidMethodError("pam() called with a non-pam method")
    _check_k(method.k, data.n_objects)
    prepared, params = _prepare(data, method)
    d = to_dissimilarity(prepared).d
    medoids = _pam_exact(d, _pam_swap(d, _pam_build(d, method.k)))
    labels = _assign_to_medoids(d, medoids)
    part = canonicalize(Partition(labels + 1, method.k, data.object_ids))
    order = [medoids[int(labels[part.members(j)[0]])] for j in range(1, part.k + 1)]
    return ClusterModel(method, part,
                        medoid_ids=tuple(data.object_ids[m] for m in order),
                        standardization=params, data=prepared,
                        objective=_pam_cost(d, medoids))


# ---------------------------------------------------------------------------
# registry

_REGISTRY: dict[str, Callable[[Dataset, ClusteringMethod], ClusterModel]] = {
    "kmeans": kmeans,
    "hierarchical": hierarchical,
    "pam": pam,
}


def register_algorithm(name: str, fn: Callable[[Dataset, ClusteringMethod], ClusterModel]):
    """Make an external clustering routine available to :func:`apply_method`."""
    _REGISTRY[name] = fn


def registered_algorithms():
    return tuple(_REGISTRY)


def apply_method(data: Dataset, method: ClusteringMethod) -> ClusterModel:
    """Run the full pipeline of ``method`` (preprocessing included) on ``data``."""
    try:
        fn = _REGISTRY[method.algorithm]
    except KeyError:
        raise InvalidMethodError(f"unknown algorithm {method.algorithm!r}")
    return fn(data, method)


def inject_model(data: Dataset, partition: Partition, method: ClusteringMethod,
                 centroids=None, medoid_ids=None) -> ClusterModel:
    """Wrap a precomputed partition (e.g. from an external tool) as a model."""
    if tuple(partition.object_ids) != tuple(data.object_ids):
        raise InvalidDataError("partition and data cover different objects")
    part = canonicalize(partition)
    prepared, params = _prepare(data, method)
    if centroids is not None:
        centroids = np.asarray(centroids, dtype=float)
        if centroids.shape[0] != part.k:
            raise InvalidDataError("need one centroid per cluster")
    if medoid_ids is not None:
        medoid_ids = tuple(medoid_ids)
        pos = {o: i for i, o in enumerate(part.object_ids)}
        for j, m in enumerate(medoid_ids, start=1):
            if part.labels[pos[m]] != j:
                raise InvalidDataError(f"medoid {m} is not a member of cluster {j}")
    return ClusterModel(method, part, centroids=centroids, medoid_ids=medoid_ids,
                        standardization=params, data=prepared)


def within_ss(x: np.ndarray, labels: np.ndarray) -> float:
    """Within-cluster sum of squares for 1-based ``labels``."""
    total = 0.0
    for lab in np.unique(labels):
        pts = x[labels == lab]
        total += float(((pts - pts.mean(axis=0)) ** 2).sum())
    return total
