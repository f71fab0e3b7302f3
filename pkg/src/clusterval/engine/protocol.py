"""The two-step validation protocol.

Step 1 selects a clustering method using discovery data only. The validation
data is sealed (content-hashed) before Step 1 and handed out only after the
seal has been re-verified. Step 2 then runs the internal / external / visual /
stability comparisons in their method-based and result-based variants.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .. import __version__, indices, nulltest
from ..cluster import ClusterModel, apply_method
from ..core import (
    ClusteringMethod,
    Dataset,
    FeatureDataset,
    Partition,
    canonicalize,
    content_hash,
    contingency_table,
)
from ..errors import (
    ClusterValError,
    ConfigError,
    MeaninglessCombinationError,
    NoMethodError,
    SchemaMismatchError,
    SealViolationError,
    UndefinedIndexError,
)
from ..indices import HIGHER, LOWER
from ..match import ClusterMatching, match_by_centroids, match_by_intersection
from ..split import SplitPair
from ..transfer import default_rule, transfer
from . import visual

log = logging.getLogger(__name__)

ASPECTS = ("internal", "external", "visual", "stability")
VARIANTS = ("method_based", "result_based")


# ---------------------------------------------------------------------------
# sealing


@dataclass(frozen=True)
class Seal:
    content_hash: str
    object_ids: tuple
    file_path: Optional[str] = None
    file_hash: Optional[str] = None

    @classmethod
    def of(cls, data: Dataset, file_path=None) -> "Seal":
        from ..io import file_sha256

        fh = file_sha256(file_path) if file_path else None
        return cls(content_hash(data), tuple(data.object_ids),
                   str(file_path) if file_path else None, fh)

    def verify(self, data: Dataset):
        from ..io import file_sha256

        if self.file_path is not None and file_sha256(self.file_path) != self.file_hash:
            raise SealViolationError(
                f"validation file {self.file_path} changed after it was sealed")
        if content_hash(data) != self.content_hash:
            raise SealViolationError("validation data changed after it was sealed")

    def to_dict(self):
        return {"content_hash": self.content_hash, "file_path": self.file_path,
                "file_hash": self.file_hash}


class SealedData:
    """Holds the validation dataset until the seal is re-verified."""

    def __init__(self, data: Dataset, seal: Seal):
        self._data = data
        self.seal = seal

    def open(self) -> Dataset:
        self.seal.verify(self._data)
        return self._data


# ---------------------------------------------------------------------------
# Step 1


@dataclass(frozen=True, eq=False)
class Selection:
    method: ClusteringMethod
    model: ClusterModel
    criterion: str
    direction: str
    value: float
    ranking: tuple  # one dict per candidate, in candidate order

    def to_dict(self):
        return {"selected": self.method.to_dict(), "criterion": self.criterion,
                "direction": self.direction, "value": self.value,
                "ranking": list(self.ranking)}


def select_method(d1: Dataset, candidates: Sequence[ClusteringMethod],
                  criterion: str = "asw", seal: Optional[Seal] = None) -> Selection:
    """Relative validation on discovery data: run every candidate on ``d1``
    and keep the best by ``criterion`` (first candidate wins ties)."""
    if seal is not None and content_hash(d1) == seal.content_hash:
        raise SealViolationError("select_method was handed the sealed validation data")
    if not candidates:
        raise NoMethodError("no candidate methods given")
    direction = indices.INDEX_DIRECTIONS.get(criterion)
    if direction is None or criterion not in indices.INTERNAL_INDICES:
        raise ConfigError(f"unknown selection criterion {criterion!r}")
    rows, best = [], None
    for i, method in enumerate(candidates):
        row = {"index": i, "method": method.to_dict(), "label": method.label()}
        try:
            model = apply_method(d1, method)
            value = indices.internal_index(criterion, d1, model.partition).value
            if not math.isfinite(value):
                raise UndefinedIndexError(f"{criterion} is not finite")
        except ClusterValError as exc:
            row.update(status="failed", error=str(exc))
            rows.append(row)
            continue
        row.update(status="ok", value=value)
        rows.append(row)
        better = best is None or (value > best[1] if direction == HIGHER else value < best[1])
        if better:
            best = (i, value, model)
    if best is None:
        raise NoMethodError("every candidate method failed on the discovery data")
    i, value, model = best
    ranked = sorted((r for r in rows if r["status"] == "ok"),
                    key=lambda r: (-r["value"] if direction == HIGHER else r["value"], r["index"]))
    for rank, r in enumerate(ranked, start=1):
        r["rank"] = rank
    return Selection(candidates[i], model, criterion, direction, value, tuple(rows))


# ---------------------------------------------------------------------------
# context


class ValidationContext:
    """State of a Step-2 run; C2md, C2tf and the matching are computed lazily."""

    def __init__(self, pair: SplitPair, model1: ClusterModel, seal: Optional[Seal] = None,
                 matching_strategy: str = "intersection_via_transfer"):
        self.pair = pair
        self.model1 = model1
        self.seal = seal
        self.matching_strategy = matching_strategy
        self._model2 = None
        self._c2tf = None
        self._matching = None

    @property
    def method(self) -> ClusteringMethod:
        return self.model1.method

    @property
    def c1(self) -> Partition:
        return self.model1.partition

    @property
    def model2(self) -> ClusterModel:
        if self._model2 is None:
            self._model2 = apply_method(self.pair.validation, self.method)
        return self._model2

    @property
    def c2md(self) -> Partition:
        return self.model2.partition

    @property
    def c2tf(self) -> Partition:
        if self._c2tf is None:
            self._c2tf = transfer(self.model1, self.pair, default_rule(self.method, self.pair.mode))
        return self._c2tf

    @property
    def matching(self) -> ClusterMatching:
        if self._matching is None:
            if self.matching_strategy == "centroid_distance":
                self._matching = match_by_centroids(self.model1, self.model2)
            else:
                self._matching = match_by_intersection(self.c2md, self.c2tf)
        return self._matching

    def partition(self, variant: str) -> Partition:
        if variant == "method_based":
            return self.c2md
        if variant == "result_based":
            return self.c2tf
        raise ConfigError(f"unknown variant {variant!r}")

    def display_labels(self, variant: str) -> dict:
        """Map validation labels to the discovery labels they correspond to."""
        if variant == "result_based":
            return {}
        m = self.matching
        labels = dict(m.assignment)
        extra = self.c1.k
        for v in m.unpaired_validation:
            extra += 1
            labels[v] = extra
        return labels


def optimism_gap(disc: float, val: float, direction: str) -> Optional[float]:
    """Positive when the validation value is worse than the discovery value."""
    if disc is None or val is None:
        return None
    gap = disc - val if direction == HIGHER else val - disc
    return float(gap) if math.isfinite(gap) else None


def _safe(fn, *args):
    try:
        return fn(*args).to_dict()
    except ClusterValError as exc:
        return {"undefined": str(exc)}


def _compare(disc: dict, val: dict, direction: str) -> dict:
    return {"discovery": disc, "validation": val, "direction": direction,
            "gap": optimism_gap(disc.get("value"), val.get("value"), direction)}


def _internal_suite(data, p: Partition) -> dict:
    out = {"asw": _safe(indices.avg_silhouette_width, data, p)}
    if isinstance(data, FeatureDataset):
        out["ch"] = _safe(indices.calinski_harabasz, data, p)
    try:
        h, s = indices.homogeneity_and_separation(data, p)
        out["homogeneity"], out["separation"] = h.to_dict(), s.to_dict()
    except ClusterValError as exc:
        out["homogeneity"] = out["separation"] = {"undefined": str(exc)}
    out["size_profile"] = indices.cluster_size_profile(p).to_dict()
    return out


def _cluster_pairs(ctx: ValidationContext, variant: str):
    if variant == "result_based":
        return [(j, j) for j in range(1, ctx.c1.k + 1)], None
    m = ctx.matching
    return [(d, v) for v, d in m.assignment], m


def _descriptors(ctx: ValidationContext, variant: str, top: int = 10) -> dict:
    d1, d2 = ctx.pair.discovery, ctx.pair.validation
    c1, c2 = ctx.c1, ctx.partition(variant)
    pairs, matching = _cluster_pairs(ctx, variant)
    same_vars = (isinstance(d1, FeatureDataset) and isinstance(d2, FeatureDataset)
                 and set(d1.variable_ids) == set(d2.variable_ids))
    per = []
    for dj, vj in sorted(pairs):
        i1, i2 = c1.members(dj), c2.members(vj)
        entry = {"discovery_cluster": dj, "validation_cluster": vj,
                 "discovery_size": int(i1.size), "validation_size": int(i2.size),
                 "discovery_share": i1.size / c1.n, "validation_share": i2.size / c2.n}
        if same_vars:
            x2 = d2.take_variables(d1.variable_ids).values
            m1 = d1.values[i1].mean(axis=0)
            m2 = x2[i2].mean(axis=0) if i2.size else np.full(m1.shape, np.nan)
            entry["centroid_distance"] = (float(np.linalg.norm(m1 - m2)) if i2.size else None)
            entry["variable_means"] = {v: [float(a), (float(b) if i2.size else None)]
                                       for v, a, b in zip(d1.variable_ids, m1, m2)}
        per.append(entry)
    out = {"clusters": per}
    if matching is not None:
        out["matching"] = matching.to_dict()
    if isinstance(d1, FeatureDataset) and isinstance(d2, FeatureDataset):
        f1 = indices.variable_f_statistics(d1, c1)
        f2 = indices.variable_f_statistics(d2, c2)
        key = lambda kv: (-(kv[1] if kv[1] is not None else -math.inf), kv[0])  # noqa: E731
        out["top_variables"] = {
            "discovery": [[v, f] for v, f in sorted(f1.items(), key=key)[:top]],
            "validation": [[v, f] for v, f in sorted(f2.items(), key=key)[:top]],
        }
    return out


def validate_internal(ctx: ValidationContext, variant: str) -> dict:
    """Internal-index suite on (D1, C1) against (D2, C2 of ``variant``)."""
    d1, d2 = ctx.pair.discovery, ctx.pair.validation
    disc = _internal_suite(d1, ctx.c1)
    val = _internal_suite(d2, ctx.partition(variant))
    section = {"variant": variant, "partition": "c2md" if variant == "method_based" else "c2tf",
               "indices": {name: _compare(disc[name], val[name],
                                          indices.INDEX_DIRECTIONS[name]) for name in disc}}
    section["clusters"] = _descriptors(ctx, variant)
    return section


# ---------------------------------------------------------------------------
# external


@dataclass(frozen=True)
class ExternalVariable:
    """An external variable or reference partition keyed by object id."""

    name: str
    kind: str  # categorical | numeric | partition
    values: dict

    def __post_init__(self):
        if self.kind not in ("categorical", "numeric", "partition"):
            raise ConfigError(f"unknown external kind {self.kind!r}")

    def take(self, ids):
        missing = [i for i in ids if i not in self.values]
        if missing:
            raise SchemaMismatchError(f"external variable {self.name!r} is undefined for objects",
                                      missing[:10])
        return [self.values[i] for i in ids]


def _external_side(ext: ExternalVariable, p: Partition) -> dict:
    vals = ext.take(p.object_ids)
    if ext.kind == "categorical":
        return {"chi_square": _safe(indices.chi_square_association, p, vals)}
    if ext.kind == "numeric":
        return {"anova_f": _safe(indices.anova_f_association, p, [float(v) for v in vals])}
    ref = canonicalize(Partition(_label_codes(vals), None, p.object_ids))
    return {name: _safe(fn, p, ref) for name, fn in
            (("ari", indices.adjusted_rand), ("jaccard", indices.jaccard),
             ("fm", indices.fowlkes_mallows))}


def _label_codes(vals):
    codes = {}
    return [codes.setdefault(str(v), len(codes) + 1) for v in vals]


def validate_external(ctx: ValidationContext, variant: str, external: ExternalVariable) -> dict:
    if (ctx.pair.mode == "descriptive" and variant == "result_based"
            and external.kind in ("categorical", "numeric")):
        raise MeaninglessCombinationError(
            "in descriptive mode the transferred clustering equals the discovery clustering, "
            "so re-testing its association with an external variable adds nothing")
    disc = _external_side(external, ctx.c1)
    val = _external_side(external, ctx.partition(variant))
    return {"variant": variant, "external": external.name, "kind": external.kind,
            "statistics": {name: _compare(disc[name], val[name], HIGHER) for name in disc}}


# ---------------------------------------------------------------------------
# stability


def validate_stability(ctx: ValidationContext, null: Optional[dict] = None,
                       workers: int = 1) -> dict:
    """Partition agreement between the reclustered and the transferred clustering."""
    c2md, c2tf = ctx.c2md, ctx.c2tf
    compared = ("c1_vs_c2md" if ctx.pair.mode == "descriptive" else "c2md_vs_c2tf")
    section = {"compared": compared,
               "indices": {name: fn(c2md, c2tf).to_dict()
                           for name, fn in indices.PARTITION_INDICES.items()}}
    m = ctx.matching if ctx.matching_strategy == "intersection_via_transfer" \
        else match_by_intersection(c2md, c2tf)
    table = contingency_table(c2md, c2tf)
    row_order = [v for v, _ in sorted(m.assignment, key=lambda a: a[1])] + list(m.unpaired_validation)
    section["contingency"] = {
        "rows_validation_clusters": row_order,
        "columns_discovery_clusters": list(range(1, c2tf.k + 1)),
        "table": table[[r - 1 for r in row_order]].tolist(),
    }
    if null:
        if ctx.pair.mode != "inferential" or not isinstance(ctx.pair.discovery, FeatureDataset):
            section["null_reference"] = {"skipped": "needs an inferential feature split"}
        else:
            res = nulltest.null_reference_validation(
                ctx.pair, ctx.method, null.get("statistic", "ari_md_tf"), null["kind"],
                null["M"], null["seed"], null.get("fit_on", "validation"), workers)
            section["null_reference"] = res.to_dict()
    return section


# ---------------------------------------------------------------------------
# visual


def _visual_side(ctx, variant, d2, c2, display):
    out = {}
    d1 = ctx.pair.discovery
    if isinstance(d1, FeatureDataset) and d1.n_variables >= 2 and d2.n_variables >= 2 \
            and min(d1.n_objects, d2.n_objects) >= 2:
        if ctx.pair.mode == "inferential":
            proj = visual.fit_projection(d1)
            rows = visual.score_rows(proj, d1, ctx.c1.labels, "discovery")
            rows += visual.score_rows(proj, d2, [display.get(l, l) for l in c2.labels.tolist()],
                                      "validation")
            axes = "discovery"
        else:
            rows = visual.score_rows(visual.fit_projection(d1), d1, ctx.c1.labels, "discovery")
            rows += visual.score_rows(visual.fit_projection(d2), d2,
                                      [display.get(l, l) for l in c2.labels.tolist()],
                                      "validation")
            axes = "separate"
        out["scores"] = {"axes": axes, "rows": rows}
    else:
        out["scores"] = {"skipped": "projection needs feature data with at least 2 variables"}
    order = list(range(1, ctx.c1.k + 1))
    inverse = {d: v for v, d in display.items()}
    val_order = [inverse.get(j, j) for j in order] if display else order
    val_order += [l for l in range(1, c2.k + 1) if l not in val_order]
    sil = {}
    for name, data, p, cl_order, disp in (("discovery", d1, ctx.c1, order, None),
                                          ("validation", d2, c2, val_order, display)):
        try:
            sil[name] = visual.silhouette_rows(data, p, cl_order, disp)
        except ClusterValError as exc:
            sil[name] = {"skipped": str(exc)}
    out["silhouettes"] = sil
    return out


def validate_visual(ctx: ValidationContext, variant: str, null: Optional[dict] = None) -> dict:
    """Plot data comparing D1/C1 with D2 and the ``variant`` clustering."""
    c2 = ctx.partition(variant)
    display = ctx.display_labels(variant)
    bundle = {"variant": variant, **_visual_side(ctx, variant, ctx.pair.validation, c2, display)}
    if null and isinstance(ctx.pair.validation, FeatureDataset):
        if ctx.pair.mode == "descriptive":
            bundle["null"] = {"skipped": "null counterpart needs inferential data"}
        else:
            sim = nulltest.simulate(nulltest.fit_null(ctx.pair.validation, null["kind"]),
                                    null["seed"])
            if variant == "method_based":
                cp = apply_method(sim, ctx.method).partition
            else:
                sim_pair = SplitPair(ctx.pair.discovery, sim, "inferential", ctx.pair.ratio)
                cp = transfer(ctx.model1, sim_pair, default_rule(ctx.method))
            bundle["null"] = _visual_side(ctx, variant, sim, cp, {})
    return bundle


# ---------------------------------------------------------------------------
# configuration and the full run


def derive_seed(master: int, purpose: int) -> int:
    ss = np.random.SeedSequence(master, spawn_key=(purpose,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


SEED_SPLIT, SEED_METHODS, SEED_NULL, SEED_VISUAL_NULL = 0, 1, 2, 3


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def expand_candidates(specs, method_seed: int) -> list[ClusteringMethod]:
    """Expand candidate entries whose fields may be lists into a flat grid.

    Order: entries in given order; within an entry, k varies slowest, then
    preprocessing, then linkage.
    """
    out = []
    for spec in specs:
        spec = dict(spec)
        algorithm = spec.pop("algorithm")
        ks = _as_list(spec.pop("k"))
        preps = _as_list(spec.pop("preprocessing", "none"))
        links = _as_list(spec.pop("linkage", "average" if algorithm == "hierarchical" else None))
        restarts = spec.pop("n_restarts", spec.pop("restarts", 10))
        max_iter = spec.pop("max_iter", 100)
        seed = spec.pop("seed", method_seed)
        if spec:
            raise ConfigError(f"unknown candidate fields: {sorted(spec)}")
        for k, prep, link in itertools.product(ks, preps, links):
            if algorithm == "kmeans":
                out.append(ClusteringMethod("kmeans", int(k), prep, None, int(seed),
                                            int(max_iter), int(restarts)))
            else:
                out.append(ClusteringMethod(algorithm, int(k), prep, link))
    return out


@dataclass
class ProtocolConfig:
    """Declarative description of a full run (see README for the schema)."""

    seed: int
    data: dict = field(default_factory=dict)
    mode: str = "inferential"
    split: dict = field(default_factory=dict)
    candidates: list = field(default_factory=list)
    criterion: str = "asw"
    aspects: list = field(default_factory=lambda: list(ASPECTS))
    variants: list = field(default_factory=lambda: list(VARIANTS))
    matching: str = "intersection_via_transfer"
    external: list = field(default_factory=list)
    null: Optional[dict] = None
    threshold: Optional[dict] = None
    base_dir: str = "."

    KEYS = ("seed", "data", "mode", "split", "candidates", "criterion", "aspects", "variants",
            "matching", "external", "null", "threshold")

    @classmethod
    def from_dict(cls, d: dict, base_dir=".") -> "ProtocolConfig":
        if None in d:  # YAML reads a bare `null:` key as None
            d = dict(d)
            d["null"] = d.pop(None)
        unknown = set(d) - set(cls.KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if d.get("seed") is None:
            raise ConfigError("config needs a seed (all randomness derives from it)")
        cfg = cls(**{k: v for k, v in d.items() if v is not None}, base_dir=str(base_dir))
        cfg.check()
        return cfg

    def check(self):
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.mode not in ("inferential", "descriptive"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        for a in self.aspects:
            if a not in ASPECTS:
                raise ConfigError(f"unknown aspect {a!r}")
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigError(f"unknown variant {v!r}")
        if self.matching not in ("intersection_via_transfer", "centroid_distance"):
            raise ConfigError(f"unknown matching strategy {self.matching!r}")
        if not self.candidates:
            raise ConfigError("config lists no candidate methods")
        ratio = self.split.get("ratio", 0.5)
        if not 0 < ratio < 1:
            raise ConfigError("split ratio must lie strictly between 0 and 1")
        if self.null is not None:
            kind = self.null.get("kind", "uniform")
            nulltest._kind(kind)
            if int(self.null.get("M", 99)) < 1:
                raise ConfigError("null.M must be at least 1")

    def resolved(self) -> dict:
        """The effective configuration with every default filled in."""
        split = {"ratio": self.split.get("ratio", 0.5),
                 "seed": self.split.get("seed", derive_seed(self.seed, SEED_SPLIT))}
        if "stratify_by" in self.split:
            split["stratify_by"] = self.split["stratify_by"]
        null = None
        if self.null is not None:
            null = {"kind": nulltest._kind(self.null.get("kind", "uniform")),
                    "M": int(self.null.get("M", 99)),
                    "statistic": self.null.get("statistic", "ari_md_tf"),
                    "fit_on": self.null.get("fit_on", "validation"),
                    "seed": self.null.get("seed", derive_seed(self.seed, SEED_NULL)),
                    "visual": bool(self.null.get("visual", True))}
        methods = expand_candidates(self.candidates, derive_seed(self.seed, SEED_METHODS))
        return {
            "seed": self.seed, "data": dict(self.data), "mode": self.mode, "split": split,
            "candidates": [m.to_dict() for m in methods], "criterion": self.criterion,
            "aspects": list(self.aspects), "variants": list(self.variants),
            "matching": self.matching, "external": list(self.external), "null": null,
            "threshold": self.threshold,
        }


def _path(base, p):
    p = Path(p)
    return p if p.is_absolute() else Path(base) / p


def load_pair(cfg: ProtocolConfig, resolved: dict, externals=()) -> tuple[SplitPair, Optional[Path]]:
    """Build the split pair the config describes; returns it with the
    validation file path when the validation data comes from a file."""
    from ..io import file_sha256, read_dataset, read_matrix_csv
    from ..split import ingest_pair, split

    data = cfg.data
    form = data.get("form", "feature")
    if "path" in data:
        full = read_dataset(_path(cfg.base_dir, data["path"]), form)
        strata = None
        if "stratify_by" in resolved["split"]:
            name = resolved["split"]["stratify_by"]
            strata = next((e.values for e in externals if e.name == name), None)
            if strata is None:
                raise ConfigError(f"stratify_by names unknown external variable {name!r}")
        pair = split(full, cfg.mode, resolved["split"]["ratio"], resolved["split"]["seed"],
                     strata)
        return pair, None
    if "discovery" in data and "validation" in data:
        d1p, d2p = _path(cfg.base_dir, data["discovery"]), _path(cfg.base_dir, data["validation"])
        if "manifest" in data:
            import json

            manifest = json.loads(_path(cfg.base_dir, data["manifest"]).read_text("utf-8"))
            files = manifest.get("files", {})
            for role, p in (("discovery", d1p), ("validation", d2p)):
                expected = files.get(role, {}).get("sha256")
                if expected is not None and file_sha256(p) != expected:
                    raise SealViolationError(
                        f"{role} file {p} does not match the hash recorded at split time")
        pair = ingest_pair(d1p, d2p, cfg.mode, form)
        if "cross_block" in data:
            m, rows, cols = read_matrix_csv(_path(cfg.base_dir, data["cross_block"]))
            if rows != list(pair.discovery.object_ids) or cols != list(pair.validation.object_ids):
                raise SchemaMismatchError("cross block ids do not match the datasets")
            pair = SplitPair(pair.discovery, pair.validation, pair.mode, pair.ratio, None, m)
        return pair, d2p
    raise ConfigError("config data needs either 'path' or 'discovery' and 'validation'")


def load_externals(cfg: ProtocolConfig) -> list[ExternalVariable]:
    from ..io import read_table_csv

    out = []
    for spec in cfg.external:
        ids, cols = read_table_csv(_path(cfg.base_dir, spec["file"]))
        col = spec.get("column", spec.get("name"))
        if col not in cols:
            raise ConfigError(f"external file {spec['file']} has no column {col!r}")
        out.append(ExternalVariable(spec.get("name", col), spec.get("kind", "categorical"),
                                    dict(zip(ids, cols[col]))))
    return out


@dataclass
class ValidationReport:
    step1: dict
    sections: dict
    optimism: dict
    provenance: dict
    notices: list = field(default_factory=list)
    plots: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {"step1": self.step1, "sections": self.sections, "optimism": self.optimism,
                "provenance": self.provenance, "notices": self.notices}


def _record(sections, key, fn, *args, **kwargs):
    try:
        sections[key] = fn(*args, **kwargs)
    except ClusterValError as exc:
        sections[key] = {"error": exc.code, "message": str(exc)}
    return sections[key]


def _strip_rows(bundle):
    """Plot rows go to CSV files; the report keeps counts only."""
    out = {}
    for key, val in bundle.items():
        if key == "scores" and "rows" in val:
            out[key] = {"axes": val["axes"], "n_rows": len(val["rows"])}
        elif key == "silhouettes":
            out[key] = {k: ({"n_rows": len(v)} if isinstance(v, list) else v)
                        for k, v in val.items()}
        elif key == "null" and isinstance(val, dict):
            out[key] = _strip_rows(val)
        else:
            out[key] = val
    return out


def _threshold(threshold, sections, step1):
    """Echo and evaluate a user-declared, pre-registered threshold."""
    t = dict(threshold)
    out = {"declared_by_user": True, "threshold": t}
    index, variant = t.get("index", "asw"), t.get("variant", "result_based")
    entry = sections.get(f"internal.{variant}", {}).get("indices", {}).get(index)
    value = entry["validation"].get("value") if entry else None
    out["observed_validation_value"] = value
    if value is not None and "min" in t:
        out["meets_user_threshold"] = value >= t["min"]
    if value is not None and "max" in t:
        out["meets_user_threshold"] = value <= t["max"]
    return out


def run_protocol(config, *, pair: Optional[SplitPair] = None, workers: int = 1,
                 hooks: Optional[dict] = None) -> ValidationReport:
    """Run split/ingest, Step 1, seal verification and the requested Step-2
    analyses, returning a report whose numbers are reproducible from its
    provenance block."""
    if isinstance(config, dict):
        config = ProtocolConfig.from_dict(config)
    hooks = hooks or {}
    resolved = config.resolved()
    externals = load_externals(config) if config.external else []
    val_path = None
    if pair is None:
        pair, val_path = load_pair(config, resolved, externals)

    # seal the validation data before anything else looks at the data
    sealed = SealedData(pair.validation, Seal.of(pair.validation, val_path))
    seal = sealed.seal
    discovery = pair.discovery
    meta = dict(mode=pair.mode, ratio=pair.ratio, seed=pair.seed, cross_block=pair.cross_block)
    del pair

    # Step 1: discovery data only
    candidates = [ClusteringMethod.from_dict(m) for m in resolved["candidates"]]
    selection = select_method(discovery, candidates, config.criterion, seal=seal)
    if "after_step1" in hooks:
        hooks["after_step1"]()

    # Step 2
    validation = sealed.open()
    full = SplitPair(discovery, validation, meta["mode"], meta["ratio"], meta["seed"],
                     meta["cross_block"])
    ctx = ValidationContext(full, selection.model, seal, config.matching)
    null = resolved["null"]

    sections, plots, notices = {}, {}, []
    if "internal" in config.aspects:
        for v in config.variants:
            _record(sections, f"internal.{v}", validate_internal, ctx, v)
    if "external" in config.aspects:
        if not externals:
            notices.append("external aspect requested but no external variables configured")
        for ext in externals:
            for v in config.variants:
                _record(sections, f"external.{ext.name}.{v}", validate_external, ctx, v, ext)
    if "visual" in config.aspects:
        vnull = None
        if null and null.get("visual"):
            vnull = {"kind": null["kind"], "seed": derive_seed(config.seed, SEED_VISUAL_NULL)}
        for v in config.variants:
            bundle = _record(plots, v, validate_visual, ctx, v, vnull)
            sections[f"visual.{v}"] = _strip_rows(bundle) if "error" not in bundle else bundle
    if "stability" in config.aspects:
        _record(sections, "stability", validate_stability, ctx, null, workers)

    # selection criterion on both sides: the optimism the selection left behind
    optimism = {"criterion": config.criterion, "direction": selection.direction,
                "discovery": selection.value}
    for v in config.variants:
        try:
            val = indices.internal_index(config.criterion, validation, ctx.partition(v)).value
        except ClusterValError as exc:
            optimism[v] = {"undefined": str(exc)}
            continue
        optimism[v] = {"validation": val,
                       "gap": optimism_gap(selection.value, val, selection.direction)}

    if config.threshold:
        sections["user_threshold"] = _threshold(config.threshold, sections, selection)

    provenance = {
        "toolkit_version": __version__,
        "resolved_config": resolved,
        "seeds": {"master": config.seed, "split": resolved["split"]["seed"] if meta["seed"]
                  is not None else None,
                  "methods": derive_seed(config.seed, SEED_METHODS),
                  "null": null["seed"] if null else None,
                  "visual_null": derive_seed(config.seed, SEED_VISUAL_NULL) if null else None},
        "seal": seal.to_dict(),
        "discovery_hash": content_hash(discovery),
        "split": {"mode": meta["mode"], "ratio": meta["ratio"],
                  "discovery_ids": list(discovery.object_ids),
                  "validation_ids": list(validation.object_ids)},
        "selected_method": selection.method.to_dict(),
        "transfer_rule": default_rule(selection.method, meta["mode"]).to_dict(),
        "c1": {"object_ids": list(ctx.c1.object_ids), "labels": ctx.c1.labels.tolist()},
    }
    try:
        provenance["c2md"] = {"labels": ctx.c2md.labels.tolist()}
        provenance["c2tf"] = {"labels": ctx.c2tf.labels.tolist()}
    except ClusterValError as exc:
        notices.append(f"validation clusterings unavailable: {exc}")
    return ValidationReport(selection.to_dict(), sections, optimism, provenance, notices, plots)
