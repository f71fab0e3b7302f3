"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or directly with
``python3 tests/test_acceptance.py``.
"""

import itertools
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

sys.path.insert(0, str(Path(__file__).resolve().parent))

from clusterval.cli import main as cli_main  # noqa: E402
from clusterval.cluster import apply_method, inject_model  # noqa: E402
from clusterval.core import ClusteringMethod, FeatureDataset, Partition  # noqa: E402
from clusterval.engine.protocol import ValidationContext, run_protocol, validate_stability  # noqa: E402
from clusterval.errors import SealViolationError  # noqa: E402
from clusterval.indices import (  # noqa: E402
    HIGHER,
    adjusted_rand,
    avg_silhouette_width,
    calinski_harabasz,
    fowlkes_mallows,
    homogeneity_and_separation,
    jaccard,
    rand_index,
)
from clusterval.io import feature_csv_text, write_text  # noqa: E402
from clusterval.match import match_by_centroids, match_by_intersection  # noqa: E402
from clusterval.nulltest import OBSERVED_KEY, Statistic, monte_carlo_test  # noqa: E402
from clusterval.split import SplitPair, split_inferential  # noqa: E402

from conftest import ACCEPTANCE_LINES, TRIPWIRE, TripwireDataset, two_blobs  # noqa: E402


def verdict(number, title, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}"
    if detail:
        line += f" ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# -- 1 -----------------------------------------------------------------------

def enumerated_indices(l1, l2):
    a = b = c = d = 0
    for i, j in itertools.combinations(range(len(l1)), 2):
        s1, s2 = l1[i] == l1[j], l2[i] == l2[j]
        if s1 and s2:
            a += 1
        elif s1:
            b += 1
        elif s2:
            c += 1
        else:
            d += 1
    total = a + b + c + d
    expected = (a + b) * (a + c) / total
    max_index = ((a + b) + (a + c)) / 2
    ari = 1.0 if max_index == expected else (a - expected) / (max_index - expected)
    jac = 1.0 if a + b + c == 0 else a / (a + b + c)
    if a + b == 0 and a + c == 0:
        fm = 1.0
    else:
        fm = 0.0 if a == 0 else a / math.sqrt((a + b) * (a + c))
    return {"rand": (a + d) / total, "ari": ari, "jaccard": jac, "fm": fm}


def test_criterion_1_index_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    fns = {"rand": rand_index, "ari": adjusted_rand, "jaccard": jaccard, "fm": fowlkes_mallows}
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 31))
        k1, k2 = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        l1 = rng.integers(1, min(k1, n) + 1, n).tolist()
        l2 = rng.integers(1, min(k2, n) + 1, n).tolist()
        ref = enumerated_indices(l1, l2)
        for name, fn in fns.items():
            worst = max(worst, abs(fn(Partition(l1), Partition(l2)).value - ref[name]))
    a, b = Partition([1, 1, 2, 2]), Partition([1, 2, 1, 2])
    fixed = (abs(rand_index(a, b).value - 1 / 3) <= 1e-12
             and abs(adjusted_rand(a, b).value + 0.5) <= 1e-12
             and jaccard(a, b).value == 0.0 and fowlkes_mallows(a, b).value == 0.0)
    elapsed = time.perf_counter() - t0
    verdict(1, "index oracle equivalence", worst <= 1e-12 and fixed and elapsed < 10,
            f"max abs diff {worst:.2e}, fixed case {'ok' if fixed else 'wrong'}, {elapsed:.1f}s")


# -- 2 -----------------------------------------------------------------------

def test_criterion_2_chance_correction():
    rng = np.random.default_rng(7)
    base = np.repeat([1, 2, 3], 20)
    p = Partition(base)
    mean = float(np.mean([adjusted_rand(p, Partition(rng.permutation(base))).value
                          for _ in range(1000)]))
    verdict(2, "chance-corrected ARI mean", -0.02 <= mean <= 0.02, f"mean {mean:+.4f}")


# -- 3 -----------------------------------------------------------------------

def scripted(observed, replicates):
    def compute(data, method, seed):
        key = seed.spawn_key[0]
        return observed if key == OBSERVED_KEY else replicates[key]
    return Statistic("scripted", HIGHER, compute)


def test_criterion_3_p_value_formula():
    rng = np.random.default_rng(3)
    data = FeatureDataset(rng.random((10, 2)))
    method = ClusteringMethod.kmeans(2, seed=0, n_restarts=1)
    ok = True
    for M in (1, 9, 99):
        t_null = rng.integers(0, 6, M).astype(float).tolist()
        t = 3.0
        got = monte_carlo_test(data, method, scripted(t, t_null), M=M).p_value
        ok &= got == (sum(v >= t for v in t_null) + 1) / (M + 1)
        ok &= monte_carlo_test(data, method, scripted(1.0, [0.0] * M), M=M).p_value == 1 / (M + 1)
        ok &= monte_carlo_test(data, method, scripted(1.0, [1.0] * M), M=M).p_value == 1.0
    verdict(3, "Monte-Carlo p-value formula and boundaries", ok, "M in {1, 9, 99}")


# -- 4 -----------------------------------------------------------------------

def ks_to_uniform(ps):
    ps = np.sort(np.asarray(ps))
    n = ps.size
    upper = np.arange(1, n + 1) / n - ps
    lower = ps - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


@pytest.mark.slow
def test_criterion_4_null_self_consistency():
    t0 = time.perf_counter()
    method = ClusteringMethod.kmeans(2, seed=0, n_restarts=3)
    ps = []
    for r in range(200):
        data = FeatureDataset(np.random.default_rng(10_000 + r).random((100, 2)))
        ps.append(monte_carlo_test(data, method, "asw", "uniform_range", M=39, seed=r).p_value)
    ks = ks_to_uniform(ps)
    elapsed = time.perf_counter() - t0
    verdict(4, "null self-consistency", ks < 0.12 and elapsed < 300,
            f"KS {ks:.4f}, {elapsed:.0f}s")


# -- 5 -----------------------------------------------------------------------

def test_criterion_5_stability_on_blobs():
    t0 = time.perf_counter()
    hits = 0
    for s in range(100):
        d, _ = two_blobs(n=200, sep=5.0, seed=s)
        pair = split_inferential(d, 0.5, s)
        model = apply_method(pair.discovery, ClusteringMethod.kmeans(2, seed=s))
        ari = validate_stability(ValidationContext(pair, model))["indices"]["ari"]["value"]
        hits += ari >= 0.95
    elapsed = time.perf_counter() - t0
    verdict(5, "stability on separated blobs", hits >= 95 and elapsed < 60,
            f"{hits}/100 seeds with ARI >= 0.95, {elapsed:.1f}s")


# -- 6 -----------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_6_overoptimism_direction():
    t0 = time.perf_counter()
    cfg = {"candidates": [{"algorithm": alg, "k": list(range(2, 8)),
                           "preprocessing": ["none", "standardize"]}
                          for alg in ("kmeans", "pam")],
           "aspects": ["internal"], "variants": ["result_based"]}
    gaps = []
    for r in range(50):
        data = FeatureDataset(np.random.default_rng(500 + r).random((200, 4)))
        pair = split_inferential(data, 0.5, r)
        rep = run_protocol(dict(cfg, seed=r), pair=pair)
        assert len(rep.step1["ranking"]) == 24
        gaps.append(rep.optimism["result_based"]["gap"])
    mean = float(np.mean(gaps))
    elapsed = time.perf_counter() - t0
    verdict(6, "overoptimism direction", mean > 0 and elapsed < 600,
            f"mean ASW gap {mean:+.4f} over 50 runs, {elapsed:.0f}s")


# -- 7 -----------------------------------------------------------------------

def best_permutation(score, maximize):
    k = score.shape[0]
    vals = [sum(score[i, p[i]] for i in range(k)) for p in itertools.permutations(range(k))]
    return max(vals) if maximize else min(vals)


def test_criterion_7_matching_exactness():
    rng = np.random.default_rng(77)
    agree = 0
    for inst in range(500):
        k = int(rng.integers(1, 7))
        if inst % 2 == 0:
            p = int(rng.integers(1, 4))
            x = rng.normal(size=(2 * k, p))
            d = FeatureDataset(x)
            part = Partition(np.repeat(np.arange(1, k + 1), 2))
            c1, c2 = rng.normal(size=(k, p)), rng.normal(size=(k, p))
            method = ClusteringMethod.kmeans(k, seed=0)
            m1 = inject_model(d, part, method, centroids=c1)
            m2 = inject_model(d, part, method, centroids=c2)
            got = match_by_centroids(m1, m2)
            cost = np.linalg.norm(c2[:, None, :] - c1[None, :, :], axis=2)
            ref = best_permutation(cost, maximize=False)
            total = sum(cost[v - 1, dd - 1] for v, dd in got.assignment)
        else:
            n = int(rng.integers(k, 4 * k + 1))
            a = Partition(np.r_[np.arange(1, k + 1), rng.integers(1, k + 1, n - k)], k)
            b = Partition(np.r_[np.arange(1, k + 1), rng.integers(1, k + 1, n - k)], k)
            got = match_by_intersection(a, b)
            table = np.zeros((k, k))
            for x, y in zip(a.labels, b.labels):
                table[x - 1, y - 1] += 1
            ref = best_permutation(table, maximize=True)
            total = sum(table[v - 1, dd - 1] for v, dd in got.assignment)
        perm_ok = sorted(v for v, _ in got.assignment) == sorted(dd for _, dd in got.assignment) \
            == list(range(1, k + 1))
        agree += perm_ok and abs(total - ref) <= 1e-9 and abs(got.objective_value - ref) <= 1e-9
    verdict(7, "matching exactness", agree == 500, f"{agree}/500 instances optimal")


# -- 8 -----------------------------------------------------------------------

def test_criterion_8_seal(tmp_path):
    d, _ = two_blobs()
    pair = split_inferential(d, 0.5, 0)
    v = pair.validation
    wired = TripwireDataset(v.values, v.object_ids, v.variable_ids)
    cfg = {"seed": 3, "candidates": [{"algorithm": "kmeans", "k": [2, 3, 4]},
                                     {"algorithm": "pam", "k": [2, 3]}]}
    run_protocol(cfg, pair=SplitPair(pair.discovery, wired, "inferential", 0.5))
    no_reads = wired.reads_during_step1 == 0 and TRIPWIRE.reads_during_step1 == 0
    read_later = wired.reads > 0

    write_text(tmp_path / "d1.csv", feature_csv_text(pair.discovery))
    write_text(tmp_path / "d2.csv", feature_csv_text(pair.validation))
    file_cfg = dict(cfg, data={"discovery": str(tmp_path / "d1.csv"),
                               "validation": str(tmp_path / "d2.csv")})

    def tamper():
        lines = (tmp_path / "d2.csv").read_text().splitlines()
        cells = lines[1].split(",")
        cells[1] = repr(float(cells[1]) + 0.5)
        lines[1] = ",".join(cells)
        (tmp_path / "d2.csv").write_text("\n".join(lines) + "\n")

    try:
        run_protocol(file_cfg, hooks={"after_step1": tamper})
        aborted = False
    except SealViolationError:
        aborted = True
    verdict(8, "seal tripwire and mutation abort", no_reads and read_later and aborted,
            f"step-1 reads {wired.reads_during_step1}, step-2 reads {wired.reads}, "
            f"mutation {'aborted' if aborted else 'NOT detected'}")


# -- 9 -----------------------------------------------------------------------

def test_criterion_9_determinism(tmp_path):
    d, _ = two_blobs()
    write_text(tmp_path / "blobs.csv", feature_csv_text(d))
    (tmp_path / "run.yaml").write_text(yaml.safe_dump({
        "seed": 99, "data": {"path": "blobs.csv"},
        "candidates": [{"algorithm": "kmeans", "k": [2, 3, 4]},
                       {"algorithm": "hierarchical", "k": [2, 3], "linkage": "average"}],
        "null": {"kind": "gaussian", "M": 19}}))
    cfg = str(tmp_path / "run.yaml")
    codes = [cli_main(["validate", "--config", cfg, "--out", str(tmp_path / "a")]),
             cli_main(["validate", "--config", cfg, "--out", str(tmp_path / "b")]),
             cli_main(["validate", "--config", cfg, "--out", str(tmp_path / "c"),
                       "--workers", "4"])]
    files = ["report.json"] + sorted(f"plots/{p.name}" for p in (tmp_path / "a" / "plots").iterdir())
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / o / f).read_bytes()
               for f in files for o in ("b", "c"))
    has_null = json.loads((tmp_path / "a" / "report.json").read_text())[
        "sections"]["stability"]["null_reference"]["M"] == 19
    verdict(9, "byte-identical reports across runs and worker counts",
            codes == [0, 0, 0] and same and has_null, f"{len(files)} files compared")


# -- 10 ----------------------------------------------------------------------

def test_criterion_10_hand_fixtures():
    x = FeatureDataset(np.array([[0.0], [1.0], [10.0], [11.0]]))
    p = Partition([1, 1, 2, 2])
    asw = avg_silhouette_width(x, p).value
    ch = calinski_harabasz(x, p).value
    h, s = homogeneity_and_separation(x, p)
    ok = (abs(asw - 0.89975) <= 1e-5 and abs(ch - 200) <= 1e-9
          and h.value == 1.0 and s.value == 9.0)
    verdict(10, "hand-computed fixtures", ok,
            f"ASW {asw:.6f}, CH {ch:.9g}, homogeneity {h.value}, separation {s.value}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
