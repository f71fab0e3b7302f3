"""Transfer of a discovery clustering to validation objects."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cluster import ClusterModel
from .core import (
    ClusteringMethod,
    DissimilarityDataset,
    FeatureDataset,
    Partition,
    euclidean_distances,
)
from .errors import InsufficientDissimilarityError, InvalidMethodError, RuleModeMismatchError
from .split import SplitPair

RULES = ("nearest_centroid", "nearest_medoid", "knn", "identity")


@dataclass(frozen=True)
class TransferRule:
    kind: str
    knn_k: Optional[int] = None

    def __post_init__(self):
        if self.kind not in RULES:
            raise InvalidMethodError(f"unknown transfer rule {self.kind!r}")
        if (self.kind == "knn") != (self.knn_k is not None):
            raise InvalidMethodError("knn_k is required for, and only for, the knn rule")
        if self.knn_k is not None and self.knn_k < 1:
            raise InvalidMethodError("knn_k must be positive")

    def to_dict(self):
        return {"kind": self.kind, "knn_k": self.knn_k}


def default_rule(method: ClusteringMethod, mode: str = "inferential") -> TransferRule:
    """Classifier closest to the algorithm's own assignment rule."""
    if mode == "descriptive":
        return TransferRule("identity")
    if method.algorithm == "kmeans":
        return TransferRule("nearest_centroid")
    if method.algorithm == "pam":
        return TransferRule("nearest_medoid")
    if method.algorithm == "hierarchical":
        return TransferRule("knn", 1 if method.linkage == "single" else 3)
    return TransferRule("knn", 1)


def _validation_features(model: ClusterModel, d2: FeatureDataset) -> np.ndarray:
    if model.standardization is not None:
        return model.standardization.apply(d2).values
    if model.data is not None and isinstance(model.data, FeatureDataset) \
            and tuple(d2.variable_ids) != tuple(model.data.variable_ids):
        d2 = d2.take_variables(model.data.variable_ids)
    return d2.values


def _cross_distances(model: ClusterModel, pair: SplitPair) -> np.ndarray:
    """Distances from every validation object (rows) to every training object."""
    d2 = pair.validation
    if isinstance(d2, DissimilarityDataset):
        if pair.cross_block is None:
            raise InsufficientDissimilarityError(
                "transfer on dissimilarity data needs the discovery-validation cross block"
            )
        cross = np.asarray(pair.cross_block).T
        d1_ids = list(pair.discovery.object_ids)
        if tuple(d1_ids) != model.partition.object_ids:
            pos = {o: i for i, o in enumerate(d1_ids)}
            cross = cross[:, [pos[o] for o in model.partition.object_ids]]
        return cross
    if not isinstance(model.data, FeatureDataset):
        raise InvalidMethodError("model carries no feature-space training data")
    train = model.data
    if train.object_ids != model.partition.object_ids:
        train = train.take_objects(model.partition.object_ids)
    return euclidean_distances(_validation_features(model, d2), train.values)


def _knn_vote(dist_row, train_labels, k, kk):
    order = np.lexsort((np.arange(dist_row.size), dist_row))[:kk]
    votes = np.bincount(train_labels[order], minlength=k + 1)
    top = np.flatnonzero(votes == votes.max())
    if top.size == 1:
        return int(top[0])
    for idx in order:
        if train_labels[idx] in top:
            return int(train_labels[idx])
    raise AssertionError("unreachable")


def transfer(model: ClusterModel, pair: SplitPair, rule: TransferRule) -> Partition:
    """Assign every validation object to one of the discovery clusters (C2 tf).

    Cluster j of the result corresponds to cluster j of ``model``; clusters that
    receive no validation object stay empty rather than being renumbered.
    Distance ties go to the lowest label.
    """
    c1 = model.partition
    d2 = pair.validation
    if rule.kind == "identity":
        if pair.mode != "descriptive":
            raise RuleModeMismatchError("the identity rule applies to descriptive splits only")
        if tuple(d2.object_ids) == c1.object_ids:
            return c1
        return c1.take_objects(d2.object_ids)
    if pair.mode == "descriptive":
        raise RuleModeMismatchError(
            f"descriptive splits share their objects; rule {rule.kind!r} does not apply"
        )

    if rule.kind == "nearest_centroid":
        if model.centroids is None:
            raise InvalidMethodError("nearest_centroid needs a model with centroids")
        if not isinstance(d2, FeatureDataset):
            raise InvalidMethodError("nearest_centroid needs feature data")
        dist = euclidean_distances(_validation_features(model, d2), model.centroids)
        labels = np.argmin(dist, axis=1) + 1
    elif rule.kind == "nearest_medoid":
        if model.medoid_ids is None:
            raise InvalidMethodError("nearest_medoid needs a model with medoids")
        cross = _cross_distances(model, pair)
        pos = {o: i for i, o in enumerate(c1.object_ids)}
        labels = np.argmin(cross[:, [pos[m] for m in model.medoid_ids]], axis=1) + 1
    else:
        cross = _cross_distances(model, pair)
        kk = min(rule.knn_k, c1.n)
        labels = np.array([_knn_vote(row, c1.labels, c1.k, kk) for row in cross])
    return Partition(labels, c1.k, d2.object_ids)
