import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clusterval.cluster import apply_method, inject_model
from clusterval.core import (
    ClusteringMethod,
    DissimilarityDataset,
    FeatureDataset,
    Partition,
    euclidean_distances,
)
from clusterval.errors import InsufficientDissimilarityError, RuleModeMismatchError
from clusterval.split import SplitPair, split_descriptive, split_inferential
from clusterval.transfer import TransferRule, default_rule, transfer

NC = TransferRule("nearest_centroid")


def centroid_model():
    d1 = FeatureDataset(np.array([[0.0, 0.0], [0.5, 0.0], [10.0, 10.0], [10.5, 10.0]]),
                        ["a", "b", "c", "d"])
    return inject_model(d1, Partition([1, 1, 2, 2], object_ids=d1.object_ids),
                        ClusteringMethod.kmeans(2, seed=0),
                        centroids=[[0.0, 0.0], [10.0, 10.0]]), d1


def test_nearest_centroid_examples():
    model, d1 = centroid_model()
    d2 = FeatureDataset(np.array([[1.0, 1.0], [9.0, 9.0], [5.0, 5.0]]), ["x", "y", "z"])
    c2tf = transfer(model, SplitPair(d1, d2, "inferential", 0.5), NC)
    assert c2tf.labels.tolist() == [1, 2, 1]
    assert c2tf.object_ids == ("x", "y", "z")


def test_empty_transfer_cluster_retained():
    model, d1 = centroid_model()
    d2 = FeatureDataset(np.array([[1.0, 1.0], [2.0, 1.0]]), ["x", "y"])
    c2tf = transfer(model, SplitPair(d1, d2, "inferential", 0.5), NC)
    assert c2tf.k == 2 and c2tf.sizes().tolist() == [2, 0]


@pytest.mark.parametrize("algorithm, linkage, expected", [
    ("kmeans", None, TransferRule("nearest_centroid")),
    ("pam", None, TransferRule("nearest_medoid")),
    ("hierarchical", "single", TransferRule("knn", 1)),
    ("hierarchical", "average", TransferRule("knn", 3)),
])
def test_default_rules(algorithm, linkage, expected):
    m = {"kmeans": lambda: ClusteringMethod.kmeans(2, seed=0),
         "pam": lambda: ClusteringMethod.pam(2),
         "hierarchical": lambda: ClusteringMethod.hierarchical(2, linkage)}[algorithm]()
    assert default_rule(m) == expected
    assert default_rule(m, "descriptive") == TransferRule("identity")


def test_identity_rule_on_descriptive(blobs):
    wide = FeatureDataset(np.hstack([blobs.values, blobs.values[:, ::-1]]), blobs.object_ids)
    pair = split_descriptive(wide, 0.5, 0)
    model = apply_method(pair.discovery, ClusteringMethod.kmeans(2, seed=0))
    c2tf = transfer(model, pair, TransferRule("identity"))
    assert np.array_equal(c2tf.labels, model.partition.labels)
    assert c2tf.object_ids == pair.validation.object_ids


def test_rule_mode_mismatch(blobs):
    pair = split_inferential(blobs, 0.5, 0)
    model = apply_method(pair.discovery, ClusteringMethod.kmeans(2, seed=0))
    with pytest.raises(RuleModeMismatchError):
        transfer(model, pair, TransferRule("identity"))
    wide = FeatureDataset(np.hstack([blobs.values, blobs.values]), blobs.object_ids)
    dpair = split_descriptive(wide, 0.5, 0)
    dmodel = apply_method(dpair.discovery, ClusteringMethod.kmeans(2, seed=0))
    with pytest.raises(RuleModeMismatchError):
        transfer(dmodel, dpair, NC)


def test_missing_cross_block(line4):
    dd = DissimilarityDataset(euclidean_distances(line4.values), line4.object_ids)
    pair = split_inferential(dd, 0.5, 0)
    model = apply_method(pair.discovery, ClusteringMethod.pam(2))
    assert transfer(model, pair, TransferRule("nearest_medoid")).n == 2
    stripped = SplitPair(pair.discovery, pair.validation, "inferential", 0.5)
    with pytest.raises(InsufficientDissimilarityError):
        transfer(model, stripped, TransferRule("nearest_medoid"))
    with pytest.raises(InsufficientDissimilarityError):
        transfer(model, stripped, TransferRule("knn", 1))


def self_pair(data):
    return SplitPair(data, data, "inferential", 0.5)


def test_self_transfer_reproduces_kmeans(blobs):
    model = apply_method(blobs, ClusteringMethod.kmeans(3, seed=2))
    c2tf = transfer(model, self_pair(blobs), NC)
    assert np.array_equal(c2tf.labels, model.partition.labels)


def test_self_transfer_standardized(blobs):
    model = apply_method(blobs, ClusteringMethod.kmeans(2, seed=2, preprocessing="standardize"))
    assert np.array_equal(transfer(model, self_pair(blobs), NC).labels, model.partition.labels)


def test_self_transfer_pam_and_single_linkage(blobs):
    pam_model = apply_method(blobs, ClusteringMethod.pam(2))
    c = transfer(pam_model, self_pair(blobs), TransferRule("nearest_medoid"))
    assert np.array_equal(c.labels, pam_model.partition.labels)
    h = apply_method(blobs, ClusteringMethod.hierarchical(2, "single"))
    c = transfer(h, self_pair(blobs), TransferRule("knn", 1))
    assert np.array_equal(c.labels, h.partition.labels)


def test_frozen_standardization_used():
    # D2 rescaled: with D1's parameters, the shifted points still land correctly
    d1 = FeatureDataset(np.array([[0.0], [1.0], [10.0], [11.0]]))
    model = apply_method(d1, ClusteringMethod.kmeans(2, seed=0, preprocessing="standardize"))
    d2 = FeatureDataset(np.array([[0.2], [0.4], [0.6]]), ["x", "y", "z"])
    assert transfer(model, SplitPair(d1, d2, "inferential", 0.5), NC).labels.tolist() == [1, 1, 1]


def test_knn_vote_tie_goes_to_nearest():
    d1 = FeatureDataset(np.array([[0.0], [3.0], [10.0], [11.0], [20.0], [21.0]]))
    part = Partition([1, 2, 1, 1, 2, 2], object_ids=d1.object_ids)
    model = inject_model(d1, part, ClusteringMethod.hierarchical(2, "average"))
    d2 = FeatureDataset(np.array([[1.0], [2.0]]), ["x", "y"])
    pair = SplitPair(d1, d2, "inferential", 0.5)
    # neighbours of 1.0: 0 (label 1), 3 (label 2), 10 (label 1) -> majority 1;
    # of 2.0: 3 (label 2), 0 (label 1), 10 (label 1) -> majority 1
    assert transfer(model, pair, TransferRule("knn", 3)).labels.tolist() == [1, 1]
    # two neighbours tie one vote each; the nearer neighbour decides
    assert transfer(model, pair, TransferRule("knn", 2)).labels.tolist() == [1, 2]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_row_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    d1 = FeatureDataset(rng.normal(size=(30, 2)))
    d2 = FeatureDataset(rng.normal(size=(15, 2)), [f"v{i}" for i in range(15)])
    perm = rng.permutation(15)
    d2p = d2.take_objects([d2.object_ids[i] for i in perm])
    for method, rule in [(ClusteringMethod.kmeans(3, seed=1), NC),
                         (ClusteringMethod.hierarchical(3, "average"), TransferRule("knn", 3))]:
        model = apply_method(d1, method)
        a = transfer(model, SplitPair(d1, d2, "inferential", 0.5), rule)
        b = transfer(model, SplitPair(d1, d2p, "inferential", 0.5), rule)
        assert np.array_equal(a.labels[perm], b.labels)
        assert set(a.labels.tolist()) <= set(range(1, model.partition.k + 1))
