"""Data containers, partitions and contingency machinery."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    ConstantVariableError,
    InvalidDataError,
    InvalidMethodError,
    MismatchedObjectsError,
)

ALGORITHMS = ("kmeans", "hierarchical", "pam")
LINKAGES = ("single", "complete", "average")
PREPROCESSING = ("none", "standardize")


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


def _check_ids(ids, what):
    ids = tuple(str(i) for i in ids)
    if len(set(ids)) != len(ids):
        seen, dup = set(), []
        for i in ids:
            if i in seen:
                dup.append(i)
            seen.add(i)
        raise InvalidDataError(f"duplicate {what}: {', '.join(dup[:10])}")
    return ids


class FeatureDataset:
    """Object-by-variable matrix with string ids on both axes.

    Immutable; ``values`` is a read-only float array.
    """

    form = "feature"

    def __init__(self, values, object_ids=None, variable_ids=None):
        arr = _frozen(values)
        if arr.ndim != 2:
            raise InvalidDataError(f"feature data must be 2-D, got shape {arr.shape}")
        n, p = arr.shape
        if n < 2:
            raise InvalidDataError("need at least 2 objects")
        if p < 1:
            raise InvalidDataError("need at least 1 variable")
        if not np.all(np.isfinite(arr)):
            bad = np.argwhere(~np.isfinite(arr))[0]
            raise InvalidDataError(
                f"missing or non-finite value at row {bad[0]}, column {bad[1]}"
            )
        if object_ids is None:
            object_ids = [f"o{i + 1}" for i in range(n)]
        if variable_ids is None:
            variable_ids = [f"v{j + 1}" for j in range(p)]
        self._values = arr
        self.object_ids = _check_ids(object_ids, "object ids")
        self.variable_ids = _check_ids(variable_ids, "variable ids")
        if len(self.object_ids) != n or len(self.variable_ids) != p:
            raise InvalidDataError("id lists do not match matrix shape")

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def n_objects(self) -> int:
        return len(self.object_ids)

    @property
    def n_variables(self) -> int:
        return len(self.variable_ids)

    def take_objects(self, ids: Sequence[str]) -> "FeatureDataset":
        pos = {o: i for i, o in enumerate(self.object_ids)}
        rows = [pos[i] for i in ids]
        return FeatureDataset(self.values[rows], ids, self.variable_ids)

    def take_variables(self, ids: Sequence[str]) -> "FeatureDataset":
        pos = {v: j for j, v in enumerate(self.variable_ids)}
        cols = [pos[j] for j in ids]
        return FeatureDataset(self.values[:, cols], self.object_ids, ids)

    def __repr__(self):
        return f"FeatureDataset(n_objects={self.n_objects}, n_variables={self.n_variables})"


class DissimilarityDataset:
    """Symmetric, zero-diagonal, non-negative object-by-object matrix."""

    form = "dissimilarity"

    def __init__(self, d, object_ids=None):
        arr = _frozen(d)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise InvalidDataError(f"dissimilarity matrix must be square, got {arr.shape}")
        n = arr.shape[0]
        if n < 2:
            raise InvalidDataError("need at least 2 objects")
        if not np.all(np.isfinite(arr)):
            raise InvalidDataError("dissimilarities must be finite")
        if np.any(arr < 0):
            raise InvalidDataError("dissimilarities must be non-negative")
        if not np.array_equal(arr, arr.T):
            raise InvalidDataError("dissimilarity matrix is not symmetric")
        if np.any(np.diag(arr) != 0):
            raise InvalidDataError("dissimilarity matrix must have a zero diagonal")
        if object_ids is None:
            object_ids = [f"o{i + 1}" for i in range(n)]
        self.d = arr
        self.object_ids = _check_ids(object_ids, "object ids")
        if len(self.object_ids) != n:
            raise InvalidDataError("object ids do not match matrix shape")

    @property
    def n_objects(self) -> int:
        return len(self.object_ids)

    def take_objects(self, ids: Sequence[str]) -> "DissimilarityDataset":
        pos = {o: i for i, o in enumerate(self.object_ids)}
        rows = [pos[i] for i in ids]
        return DissimilarityDataset(self.d[np.ix_(rows, rows)], ids)

    def __repr__(self):
        return f"DissimilarityDataset(n_objects={self.n_objects})"


Dataset = Union[FeatureDataset, DissimilarityDataset]


class Partition:
    """Assignment of objects to clusters labelled 1..k.

    Label values may be unused (transferred partitions keep empty clusters);
    :func:`canonicalize` removes them.
    """

    def __init__(self, labels, k=None, object_ids=None):
        lab = np.asarray(labels)
        if lab.ndim != 1 or lab.size == 0:
            raise InvalidDataError("labels must be a non-empty 1-D sequence")
        if not np.all(np.equal(np.mod(lab, 1), 0)):
            raise InvalidDataError("labels must be integers")
        lab = _frozen(lab, dtype=np.int64)
        if k is None:
            k = int(lab.max())
        k = int(k)
        if k < 1:
            raise InvalidDataError("k must be positive")
        if lab.min() < 1 or lab.max() > k:
            raise InvalidDataError(f"labels must lie in 1..{k}")
        if k > lab.size:
            raise InvalidDataError("k cannot exceed the number of objects")
        if object_ids is None:
            object_ids = [f"o{i + 1}" for i in range(lab.size)]
        self.labels = lab
        self.k = k
        self.object_ids = _check_ids(object_ids, "object ids")
        if len(self.object_ids) != lab.size:
            raise InvalidDataError("object ids do not match label count")

    @property
    def n(self) -> int:
        return self.labels.size

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k + 1)[1:]

    def members(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)

    def take_objects(self, ids: Sequence[str]) -> "Partition":
        pos = {o: i for i, o in enumerate(self.object_ids)}
        return Partition(self.labels[[pos[i] for i in ids]], self.k, ids)

    def relabel(self, ids: Sequence[str]) -> "Partition":
        """Same labels attached to a different object-id sequence."""
        return Partition(self.labels, self.k, ids)

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return (
            self.k == other.k
            and self.object_ids == other.object_ids
            and np.array_equal(self.labels, other.labels)
        )

    def __hash__(self):
        return hash((self.k, self.object_ids, self.labels.tobytes()))

    def __repr__(self):
        return f"Partition(k={self.k}, n={self.n})"


@dataclass(frozen=True)
class ClusteringMethod:
    """A fully specified clustering pipeline: algorithm, k and all tuning choices."""

    algorithm: str
    k: int
    preprocessing: str = "none"
    linkage: Optional[str] = None
    seed: Optional[int] = None
    max_iter: Optional[int] = None
    n_restarts: Optional[int] = None

    def __post_init__(self):
        from . import cluster  # registry lives with the algorithms

        if self.algorithm not in cluster.registered_algorithms():
            raise InvalidMethodError(f"unknown algorithm {self.algorithm!r}")
        if int(self.k) != self.k or self.k < 1:
            raise InvalidMethodError("k must be a positive integer")
        if self.preprocessing not in PREPROCESSING:
            raise InvalidMethodError(f"unknown preprocessing {self.preprocessing!r}")
        if self.algorithm == "hierarchical":
            if self.linkage not in LINKAGES:
                raise InvalidMethodError("hierarchical clustering needs a linkage in "
                                         + "/".join(LINKAGES))
        elif self.linkage is not None:
            raise InvalidMethodError("linkage is only valid for hierarchical clustering")
        kmeans_fields = (self.seed, self.max_iter, self.n_restarts)
        if self.algorithm == "kmeans":
            if any(f is None for f in kmeans_fields):
                raise InvalidMethodError("kmeans needs seed, max_iter and n_restarts")
            if not 0 <= self.seed < 2**64:
                raise InvalidMethodError("seed must be a 64-bit unsigned integer")
            if self.max_iter < 1 or self.n_restarts < 1:
                raise InvalidMethodError("max_iter and n_restarts must be positive")
        elif self.algorithm in ALGORITHMS and any(f is not None for f in kmeans_fields):
            raise InvalidMethodError("seed/max_iter/n_restarts are only valid for kmeans")

    @classmethod
    def kmeans(cls, k, seed, *, preprocessing="none", max_iter=100, n_restarts=10):
        return cls("kmeans", k, preprocessing, None, seed, max_iter, n_restarts)

    @classmethod
    def hierarchical(cls, k, linkage="average", *, preprocessing="none"):
        return cls("hierarchical", k, preprocessing, linkage)

    @classmethod
    def pam(cls, k, *, preprocessing="none"):
        return cls("pam", k, preprocessing)

    def to_dict(self) -> dict:
        return {key: v for key, v in self.__dict__.items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "ClusteringMethod":
        return cls(**d)

    def label(self) -> str:
        parts = [self.algorithm, f"k={self.k}"]
        if self.linkage:
            parts.append(self.linkage)
        if self.preprocessing != "none":
            parts.append(self.preprocessing)
        return " ".join(parts)


@dataclass(frozen=True)
class StandardizationParams:
    variable_ids: tuple
    means: tuple
    sds: tuple

    def apply(self, data: FeatureDataset) -> FeatureDataset:
        """Apply the stored affine transform, aligning columns by variable id."""
        if tuple(data.variable_ids) != self.variable_ids:
            missing = set(self.variable_ids) - set(data.variable_ids)
            if missing:
                raise MismatchedObjectsError(
                    "data lacks standardized variables: " + ", ".join(sorted(missing))
                )
            data = data.take_variables(self.variable_ids)
        values = (data.values - np.asarray(self.means)) / np.asarray(self.sds)
        return FeatureDataset(values, data.object_ids, data.variable_ids)

    def to_dict(self):
        return {"variable_ids": list(self.variable_ids), "means": list(self.means),
                "sds": list(self.sds)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["variable_ids"]), tuple(d["means"]), tuple(d["sds"]))


def canonicalize(p: Partition) -> Partition:
    """Relabel in first-occurrence order and drop unused label values."""
    mapping = {}
    for lab in p.labels.tolist():
        if lab not in mapping:
            mapping[lab] = len(mapping) + 1
    new = [mapping[lab] for lab in p.labels.tolist()]
    return Partition(new, len(mapping), p.object_ids)


def contingency_table(p1: Partition, p2: Partition) -> np.ndarray:
    """k1 x k2 counts of objects sharing label i in ``p1`` and j in ``p2``."""
    if p1.object_ids != p2.object_ids:
        raise MismatchedObjectsError("partitions are defined over different objects")
    table = np.zeros((p1.k, p2.k), dtype=np.int64)
    np.add.at(table, (p1.labels - 1, p2.labels - 1), 1)
    return table


def standardize(data: FeatureDataset) -> tuple[FeatureDataset, StandardizationParams]:
    """Center and scale every column to mean 0, sample SD 1 (n-1 denominator)."""
    x = data.values
    means = x.mean(axis=0)
    sds = x.std(axis=0, ddof=1)
    for j, sd in enumerate(sds):
        if not sd > 0:
            raise ConstantVariableError(data.variable_ids[j])
    params = StandardizationParams(
        tuple(data.variable_ids), tuple(means.tolist()), tuple(sds.tolist())
    )
    return params.apply(data), params


def euclidean_distances(a: np.ndarray, b: Optional[np.ndarray] = None) -> np.ndarray:
    """Pairwise Euclidean distances; exact zeros on the diagonal when ``b`` is None."""
    a = np.asarray(a, dtype=float)
    same = b is None
    b = a if same else np.asarray(b, dtype=float)
    diff = a[:, None, :] - b[None, :, :]
    d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if same:
        d = (d + d.T) / 2
        np.fill_diagonal(d, 0.0)
    return d


def to_dissimilarity(data: Dataset) -> DissimilarityDataset:
    if isinstance(data, DissimilarityDataset):
        return data
    return DissimilarityDataset(euclidean_distances(data.values), data.object_ids)


def content_hash(data: Dataset) -> str:
    """SHA-256 over ids, shape and raw float64 bytes."""
    h = hashlib.sha256()
    h.update(data.form.encode())
    h.update("\x1f".join(data.object_ids).encode())
    if isinstance(data, FeatureDataset):
        h.update(b"\x1e")
        h.update("\x1f".join(data.variable_ids).encode())
        arr = data.values
    else:
        arr = data.d
    h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()
