import json

import numpy as np
import pytest

from clusterval.cluster import apply_method
from clusterval.core import (
    ClusteringMethod,
    FeatureDataset,
    Partition,
    euclidean_distances,
    to_dissimilarity,
)
from clusterval.engine import protocol
from clusterval.engine.protocol import (
    ExternalVariable,
    ProtocolConfig,
    Seal,
    ValidationContext,
    expand_candidates,
    optimism_gap,
    run_protocol,
    select_method,
    validate_external,
    validate_internal,
    validate_stability,
    validate_visual,
)
from clusterval.engine.report import report_json
from clusterval.engine.visual import fit_projection, silhouette_rows
from clusterval.errors import (
    MeaninglessCombinationError,
    NoMethodError,
    SealViolationError,
)
from clusterval.indices import HIGHER, LOWER, adjusted_rand
from clusterval.split import SplitPair, ingest_pair, split_inferential

from conftest import TRIPWIRE, TripwireDataset, two_blobs

KM = [ClusteringMethod.kmeans(k, seed=1) for k in (2, 3, 4)]


def blob_context(seed=0, k=2):
    d, truth = two_blobs()
    pair = split_inferential(d, 0.5, seed)
    model = apply_method(pair.discovery, ClusteringMethod.kmeans(k, seed=1))
    return ValidationContext(pair, model), truth, d


def test_select_method_picks_k2_on_blobs():
    d, _ = two_blobs()
    sel = select_method(d, KM)
    assert sel.method.k == 2
    assert [r["rank"] for r in sel.ranking] == [1, 2, 3]
    assert sel.ranking[0]["value"] == sel.value


def test_select_single_candidate_and_failures():
    d, _ = two_blobs(n=20)
    sel = select_method(d, [KM[1]])
    assert sel.method == KM[1] and len(sel.ranking) == 1
    too_big = ClusteringMethod.pam(50)
    sel = select_method(d, [too_big, KM[0]])
    assert sel.ranking[0]["status"] == "failed" and sel.method == KM[0]
    with pytest.raises(NoMethodError):
        select_method(d, [too_big])


def test_select_ties_go_to_first():
    d = FeatureDataset(np.array([[0.0], [1.0], [10.0], [11.0]]))
    a = ClusteringMethod.hierarchical(2, "single")
    b = ClusteringMethod.hierarchical(2, "complete")
    assert select_method(d, [b, a]).method == b


def test_select_refuses_sealed_data():
    d, _ = two_blobs()
    pair = split_inferential(d, 0.5, 0)
    seal = Seal.of(pair.validation)
    with pytest.raises(SealViolationError):
        select_method(pair.validation, KM, seal=seal)
    select_method(pair.discovery, KM, seal=seal)


def test_optimism_gap_direction():
    assert optimism_gap(0.8, 0.6, HIGHER) == pytest.approx(0.2)
    assert optimism_gap(1.0, 1.5, LOWER) == pytest.approx(0.5)
    assert optimism_gap(None, 1.0, HIGHER) is None


def test_internal_descriptive_identical_halves_zero_gaps():
    d, _ = two_blobs(p=2)
    d1 = FeatureDataset(d.values, d.object_ids, ["a", "b"])
    d2 = FeatureDataset(d.values.copy(), d.object_ids, ["a_copy", "b_copy"])
    pair = ingest_pair(d1, d2, "descriptive")
    model = apply_method(pair.discovery, ClusteringMethod.kmeans(2, seed=3))
    ctx = ValidationContext(pair, model)
    for variant in ("method_based", "result_based"):
        sec = validate_internal(ctx, variant)
        for name, entry in sec["indices"].items():
            assert entry["gap"] == 0.0, name
    assert ctx.c2tf is model.partition
    st = validate_stability(ctx)
    assert st["compared"] == "c1_vs_c2md"
    assert st["indices"]["ari"]["value"] == 1.0


def test_internal_result_based_blobs():
    ctx, _, _ = blob_context()
    sec = validate_internal(ctx, "result_based")
    asw = sec["indices"]["asw"]
    assert abs(asw["discovery"]["value"] - asw["validation"]["value"]) <= 0.1
    assert {"asw", "ch", "homogeneity", "separation", "size_profile"} == set(sec["indices"])
    sec = validate_internal(ctx, "method_based")
    assert sec["clusters"]["matching"]["strategy"] == "intersection_via_transfer"
    assert len(sec["clusters"]["clusters"]) == 2
    assert len(sec["clusters"]["top_variables"]["discovery"]) == 2


def test_size_profile_gap_arithmetic():
    x = np.arange(50, dtype=float).reshape(-1, 1)
    d1 = FeatureDataset(x, [f"a{i}" for i in range(50)])
    d2 = FeatureDataset(x, [f"b{i}" for i in range(50)])
    c1 = Partition([1] * 40 + [2] * 10, object_ids=d1.object_ids)
    c2 = Partition([1] * 39 + [2] * 11, object_ids=d2.object_ids)
    from clusterval.cluster import inject_model
    model = inject_model(d1, c1, ClusteringMethod.hierarchical(2, "single"))
    ctx = ValidationContext(SplitPair(d1, d2, "inferential", 0.5), model)
    ctx._c2tf = c2
    entry = validate_internal(ctx, "result_based")["indices"]["size_profile"]
    assert entry["discovery"]["value"] == 0.8 and entry["validation"]["value"] == 0.78
    assert entry["gap"] == pytest.approx(0.02)


def test_external_categorical_and_reference():
    ctx, truth, d = blob_context()
    labels = dict(zip(d.object_ids, truth))
    cat = ExternalVariable("group", "categorical", {o: f"g{v}" for o, v in labels.items()})
    sec = validate_external(ctx, "result_based", cat)
    chi = sec["statistics"]["chi_square"]
    assert chi["discovery"]["p_value"] < 1e-10 and chi["validation"]["p_value"] < 1e-10
    c1 = dict(zip(ctx.c1.object_ids, ctx.c1.labels.tolist()))
    c1.update({o: 1 for o in ctx.pair.validation.object_ids})
    ref = ExternalVariable("c1", "partition", c1)
    assert validate_external(ctx, "result_based", ref)["statistics"]["ari"]["discovery"]["value"] == 1.0
    num = ExternalVariable("score", "numeric", {o: float(v) + 0.01 * i
                                                for i, (o, v) in enumerate(labels.items())})
    assert validate_external(ctx, "method_based", num)["statistics"]["anova_f"]["validation"]["value"] > 100


def test_external_meaningless_in_descriptive():
    d, truth = two_blobs(p=4)
    from clusterval.split import split_descriptive
    pair = split_descriptive(d, 0.5, 0)
    ctx = ValidationContext(pair, apply_method(pair.discovery, ClusteringMethod.kmeans(2, seed=0)))
    ext = ExternalVariable("y", "numeric", dict(zip(d.object_ids, map(float, truth))))
    with pytest.raises(MeaninglessCombinationError):
        validate_external(ctx, "result_based", ext)
    validate_external(ctx, "method_based", ext)


def test_stability_blobs_and_contingency():
    ctx, _, _ = blob_context(seed=4)
    sec = validate_stability(ctx)
    assert sec["indices"]["ari"]["value"] >= 0.95
    table = np.array(sec["contingency"]["table"])
    assert table.sum() == ctx.pair.validation.n_objects
    assert np.all(np.diag(table) >= table.sum(axis=1) * 0.95)


def test_stability_homogeneous_is_unstable():
    rng = np.random.default_rng(0)
    d = FeatureDataset(rng.random((200, 2)))
    km = ClusteringMethod.kmeans(2, seed=0, n_restarts=3)
    aris = []
    for s in range(100):
        pair = split_inferential(d, 0.5, s)
        m1 = apply_method(pair.discovery, km)
        aris.append(validate_stability(ValidationContext(pair, m1))["indices"]["ari"]["value"])
    assert np.median(aris) < 0.9 or np.std(aris) > 0.1


def test_stability_null_reference_section():
    ctx, _, _ = blob_context()
    sec = validate_stability(ctx, {"kind": "uniform_range", "M": 9, "seed": 1})
    assert sec["null_reference"]["M"] == 9 and sec["null_reference"]["p_value"] <= 0.2


def test_projection_sign_and_reproduction():
    rng = np.random.default_rng(1)
    x = np.zeros((20, 3))
    x[:, 0] = rng.normal(size=20)
    x[:, 0] -= x[:, 0].mean()
    d1 = FeatureDataset(x)
    proj = fit_projection(d1)
    assert np.allclose(proj.loadings[:, 0], [1, 0, 0])
    d2 = FeatureDataset(np.array([[3.0, 0, 0], [0.0, 0, 0]]), ["v1", "v2"])
    assert proj.scores(d2)[0, 0] == pytest.approx(3.0)
    assert np.array_equal(proj.scores(d1), proj.scores(d1))
    scores = (d1.values - proj.center) @ proj.loadings
    assert np.array_equal(proj.scores(d1), scores)


def test_silhouette_rows_order():
    d = FeatureDataset(np.array([[0.0], [1.0], [3.0], [10.0], [11.0]]))
    p = Partition([1, 1, 1, 2, 2])
    rows = silhouette_rows(d, p, [2, 1])
    assert [r["cluster"] for r in rows] == [2, 2, 1, 1, 1]
    for c in (1, 2):
        s = [r["s_value"] for r in rows if r["cluster"] == c]
        assert s == sorted(s, reverse=True)
    assert [r["order"] for r in rows] == [1, 2, 3, 4, 5]


def test_visual_bundle_and_dissimilarity_gating():
    ctx, _, _ = blob_context()
    b = validate_visual(ctx, "method_based", {"kind": "uniform_range", "seed": 3})
    assert b["scores"]["axes"] == "discovery" and len(b["scores"]["rows"]) == 200
    assert "rows" in b["null"]["scores"]
    d, _ = two_blobs(n=40)
    dd = to_dissimilarity(d)
    pair = split_inferential(dd, 0.5, 0)
    m = apply_method(pair.discovery, ClusteringMethod.pam(2))
    vb = validate_visual(ValidationContext(pair, m), "result_based")
    assert "skipped" in vb["scores"]
    assert isinstance(vb["silhouettes"]["validation"], list)


def test_expand_candidates_order():
    ms = expand_candidates([{"algorithm": "kmeans", "k": [2, 3],
                             "preprocessing": ["none", "standardize"]},
                            {"algorithm": "hierarchical", "k": 2, "linkage": ["single", "average"]}],
                           method_seed=5)
    assert [(m.algorithm, m.k, m.preprocessing, m.linkage) for m in ms] == [
        ("kmeans", 2, "none", None), ("kmeans", 2, "standardize", None),
        ("kmeans", 3, "none", None), ("kmeans", 3, "standardize", None),
        ("hierarchical", 2, "none", "single"), ("hierarchical", 2, "none", "average")]
    assert all(m.seed == 5 for m in ms[:4])


BASE = {"seed": 7, "candidates": [{"algorithm": "kmeans", "k": [2, 3, 4]}]}


def test_run_protocol_blobs_deterministic():
    d, _ = two_blobs()
    pair = split_inferential(d, 0.5, 3)
    cfg = dict(BASE, null={"kind": "uniform", "M": 9})
    a = run_protocol(cfg, pair=pair)
    b = run_protocol(cfg, pair=pair, workers=3)
    assert report_json(a) == report_json(b)
    assert a.step1["selected"]["k"] == 2
    assert set(a.sections) >= {"internal.method_based", "internal.result_based",
                               "visual.method_based", "visual.result_based", "stability"}
    assert a.sections["stability"]["indices"]["ari"]["value"] >= 0.95
    assert "verdict" not in json.dumps(a.to_dict())


def test_run_protocol_dissimilarity_visual_skipped():
    d, _ = two_blobs(n=60)
    pair = split_inferential(to_dissimilarity(d), 0.5, 0)
    rep = run_protocol({"seed": 1, "candidates": [{"algorithm": "pam", "k": [2, 3]}]}, pair=pair)
    vis = rep.sections["visual.result_based"]
    assert "skipped" in vis["scores"]
    assert vis["silhouettes"]["validation"]["n_rows"] == 30
    assert "ch" not in rep.sections["internal.result_based"]["indices"]


def test_run_protocol_threshold_echo():
    d, _ = two_blobs()
    cfg = dict(BASE, threshold={"index": "asw", "min": 0.5})
    rep = run_protocol(cfg, pair=split_inferential(d, 0.5, 0))
    thr = rep.sections["user_threshold"]
    assert thr["declared_by_user"] and thr["meets_user_threshold"] is True


def test_tripwire_sees_no_step1_reads():
    d, _ = two_blobs()
    pair = split_inferential(d, 0.5, 0)
    v = pair.validation
    wired = TripwireDataset(v.values, v.object_ids, v.variable_ids)
    before = TRIPWIRE.reads_during_step1
    rep = run_protocol(BASE, pair=SplitPair(pair.discovery, wired, "inferential", 0.5))
    assert wired.reads_during_step1 == 0 and TRIPWIRE.reads_during_step1 == before
    assert wired.reads > 0  # Step 2 did read it
    assert rep.sections["stability"]["indices"]["ari"]["value"] >= 0.95


def test_mutation_between_steps_aborts():
    d, _ = two_blobs()
    pair = split_inferential(d, 0.5, 0)
    v = pair.validation

    def tamper():
        arr = v.values.copy()
        arr[0, 0] += 1.0
        arr.flags.writeable = False
        v._values = arr

    with pytest.raises(SealViolationError):
        run_protocol(BASE, pair=pair, hooks={"after_step1": tamper})


def test_config_validation():
    from clusterval.errors import ConfigError
    with pytest.raises(ConfigError):
        ProtocolConfig.from_dict({"candidates": BASE["candidates"]})
    with pytest.raises(ConfigError):
        ProtocolConfig.from_dict(dict(BASE, bogus=1))
    with pytest.raises(ConfigError):
        ProtocolConfig.from_dict(dict(BASE, split={"ratio": 1.2}))
    r = ProtocolConfig.from_dict(BASE).resolved()
    assert r["split"]["ratio"] == 0.5 and r["null"] is None
