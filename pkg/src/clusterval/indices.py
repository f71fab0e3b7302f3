"""Internal validation indices, partition-similarity indices and
association statistics between clusterings and external variables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import DissimilarityDataset, FeatureDataset, Partition, contingency_table, to_dissimilarity
from .distributions import chi2_sf, f_sf
from .errors import MismatchedObjectsError, UndefinedIndexError, UndefinedTestError

HIGHER = "higher_better"
LOWER = "lower_better"


@dataclass(frozen=True)
class IndexValue:
    name: str
    value: float
    direction: str
    per_cluster: Optional[tuple] = None  # ((cluster, value-or-None), ...)
    p_value: Optional[float] = None
    df: Optional[tuple] = None
    flags: tuple = ()

    def to_dict(self) -> dict:
        out = {"name": self.name, "value": self.value, "direction": self.direction,
               "per_cluster": [list(e) for e in self.per_cluster] if self.per_cluster else None}
        if self.p_value is not None:
            out["p_value"] = self.p_value
        if self.df is not None:
            out["df"] = list(self.df)
        if self.flags:
            out["flags"] = list(self.flags)
        return out


def _dissim(data) -> np.ndarray:
    if isinstance(data, (FeatureDataset, DissimilarityDataset)):
        return to_dissimilarity(data).d
    return np.asarray(data, dtype=float)


def _features(data) -> np.ndarray:
    if isinstance(data, FeatureDataset):
        return data.values
    if isinstance(data, DissimilarityDataset):
        raise UndefinedIndexError("index needs feature data")
    x = np.asarray(data, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def _nonempty(p: Partition):
    return [j for j in range(1, p.k + 1) if np.any(p.labels == j)]


# ---------------------------------------------------------------------------
# internal indices


def silhouette_values(data, p: Partition) -> np.ndarray:
    """Per-object silhouette widths; singletons get 0."""
    d = _dissim(data)
    labels = p.labels
    clusters = _nonempty(p)
    if len(clusters) < 2:
        raise UndefinedIndexError("silhouette needs at least two non-empty clusters")
    n = labels.size
    # mean dissimilarity of each object to each cluster
    onehot = (labels[:, None] == np.array(clusters)[None, :]).astype(float)
    sums = d @ onehot
    sizes = onehot.sum(axis=0)
    own = np.searchsorted(clusters, labels)
    own_size = sizes[own]
    s = np.zeros(n)
    multi = own_size > 1
    a = np.where(multi, sums[np.arange(n), own] / np.maximum(own_size - 1, 1), 0.0)
    means = sums / sizes[None, :]
    means[np.arange(n), own] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    ok = multi & (denom > 0)
    s[ok] = (b[ok] - a[ok]) / denom[ok]
    return s


def avg_silhouette_width(data, p: Partition) -> IndexValue:
    if p.n < 3:
        raise UndefinedIndexError("silhouette needs at least three objects")
    s = silhouette_values(data, p)
    per = tuple((j, float(s[p.labels == j].mean()) if np.any(p.labels == j) else None)
                for j in range(1, p.k + 1))
    return IndexValue("asw", float(s.mean()), HIGHER, per)


def calinski_harabasz(data, p: Partition) -> IndexValue:
    x = _features(data)
    if x.shape[0] != p.n:
        raise MismatchedObjectsError("data and partition sizes differ")
    clusters = _nonempty(p)
    k, n = len(clusters), p.n
    if not 2 <= k <= n - 1:
        raise UndefinedIndexError(f"Calinski-Harabasz needs 2 <= k <= n-1 (k={k}, n={n})")
    grand = x.mean(axis=0)
    between = within = 0.0
    per = []
    for j in range(1, p.k + 1):
        pts = x[p.labels == j]
        if len(pts) == 0:
            per.append((j, None))
            continue
        c = pts.mean(axis=0)
        wj = float(((pts - c) ** 2).sum())
        within += wj
        between += len(pts) * float(((c - grand) ** 2).sum())
        per.append((j, wj))
    if within == 0:
        return IndexValue("ch", math.inf, HIGHER, tuple(per), flags=("degenerate: W=0",))
    return IndexValue("ch", (between / (k - 1)) / (within / (n - k)), HIGHER, tuple(per))


def homogeneity_and_separation(data, p: Partition) -> tuple[IndexValue, IndexValue]:
    """Average within-cluster dissimilarity and minimum between-cluster dissimilarity."""
    d = _dissim(data)
    clusters = _nonempty(p)
    if len(clusters) < 2:
        raise UndefinedIndexError("homogeneity/separation need at least two clusters")
    labels = p.labels
    same = labels[:, None] == labels[None, :]
    iu = np.triu_indices(p.n, 1)
    within_pairs = d[iu][same[iu]]
    homog = float(within_pairs.mean()) if within_pairs.size else 0.0
    sep = float(d[~same].min())
    per_h, per_s = [], []
    for j in range(1, p.k + 1):
        idx = np.flatnonzero(labels == j)
        if idx.size == 0:
            per_h.append((j, None))
            per_s.append((j, None))
            continue
        block = d[np.ix_(idx, idx)]
        m = idx.size
        per_h.append((j, float(block[np.triu_indices(m, 1)].mean()) if m > 1 else 0.0))
        per_s.append((j, float(d[np.ix_(idx, np.flatnonzero(labels != j))].min())))
    return (IndexValue("homogeneity", homog, LOWER, tuple(per_h)),
            IndexValue("separation", sep, HIGHER, tuple(per_s)))


def homogeneity(data, p):
    return homogeneity_and_separation(data, p)[0]


def separation(data, p):
    return homogeneity_and_separation(data, p)[1]


def cluster_size_profile(p: Partition) -> IndexValue:
    """Relative cluster sizes, largest first; value is the largest share."""
    shares = p.sizes() / p.n
    per = sorted(((j + 1, float(s)) for j, s in enumerate(shares)), key=lambda e: (-e[1], e[0]))
    # direction only orients the optimism gap (discovery minus validation)
    return IndexValue("size_profile", per[0][1], HIGHER, tuple(per))


INTERNAL_INDICES = {
    "asw": avg_silhouette_width,
    "ch": calinski_harabasz,
    "homogeneity": homogeneity,
    "separation": separation,
}
INDEX_DIRECTIONS = {"asw": HIGHER, "ch": HIGHER, "homogeneity": LOWER, "separation": HIGHER,
                    "size_profile": HIGHER}


def internal_index(name: str, data, p: Partition) -> IndexValue:
    try:
        fn = INTERNAL_INDICES[name]
    except KeyError:
        raise UndefinedIndexError(f"unknown internal index {name!r}; "
                                  f"choose from {sorted(INTERNAL_INDICES)}")
    return fn(data, p)


# ---------------------------------------------------------------------------
# partition similarity


def pair_counts(p1: Partition, p2: Partition) -> tuple[int, int, int, int]:
    """(a, b, c, d): pairs together in both / only p1 / only p2 / neither."""
    t = contingency_table(p1, p2)
    comb = lambda m: int((m * (m - 1) // 2).sum())  # noqa: E731
    n = p1.n
    a = comb(t)
    b = comb(t.sum(axis=1)) - a
    c = comb(t.sum(axis=0)) - a
    d = n * (n - 1) // 2 - a - b - c
    return a, b, c, d


def _need_pairs(p1):
    if p1.n < 2:
        raise UndefinedIndexError("pair-counting indices need at least two objects")


def rand_index(p1: Partition, p2: Partition) -> IndexValue:
    _need_pairs(p1)
    a, b, c, d = pair_counts(p1, p2)
    return IndexValue("rand", (a + d) / (a + b + c + d), HIGHER)


def adjusted_rand(p1: Partition, p2: Partition) -> IndexValue:
    """Hubert-Arabie adjusted Rand index; 1 when the expected-index
    denominator vanishes (both partitions trivial)."""
    _need_pairs(p1)
    a, b, c, d = pair_counts(p1, p2)
    total = a + b + c + d
    rows, cols = a + b, a + c
    expected = rows * cols / total
    max_index = (rows + cols) / 2
    if max_index == expected:
        return IndexValue("ari", 1.0, HIGHER, flags=("degenerate: trivial partitions",))
    return IndexValue("ari", (a - expected) / (max_index - expected), HIGHER)


def jaccard(p1: Partition, p2: Partition) -> IndexValue:
    _need_pairs(p1)
    a, b, c, _ = pair_counts(p1, p2)
    if a + b + c == 0:
        return IndexValue("jaccard", 1.0, HIGHER, flags=("degenerate: all singletons",))
    return IndexValue("jaccard", a / (a + b + c), HIGHER)


def fowlkes_mallows(p1: Partition, p2: Partition) -> IndexValue:
    _need_pairs(p1)
    a, b, c, _ = pair_counts(p1, p2)
    if a + b == 0 and a + c == 0:
        return IndexValue("fm", 1.0, HIGHER, flags=("degenerate: all singletons",))
    if a == 0:
        return IndexValue("fm", 0.0, HIGHER)
    return IndexValue("fm", a / math.sqrt((a + b) * (a + c)), HIGHER)


PARTITION_INDICES = {
    "rand": rand_index,
    "ari": adjusted_rand,
    "jaccard": jaccard,
    "fm": fowlkes_mallows,
}


# ---------------------------------------------------------------------------
# external association


def chi_square_association(p: Partition, v: Sequence) -> IndexValue:
    """Pearson chi-square test of clusters against a categorical variable."""
    v = [str(x) for x in v]
    if len(v) != p.n:
        raise MismatchedObjectsError("external variable length differs from partition")
    cats = sorted(set(v))
    if len(cats) < 2:
        raise UndefinedTestError("external variable has a single category")
    clusters = _nonempty(p)
    if len(clusters) < 2:
        raise UndefinedTestError("chi-square test needs at least two non-empty clusters")
    ci = {c: i for i, c in enumerate(cats)}
    ri = {j: i for i, j in enumerate(clusters)}
    obs = np.zeros((len(clusters), len(cats)))
    for lab, cat in zip(p.labels.tolist(), v):
        obs[ri[lab], ci[cat]] += 1
    exp = obs.sum(axis=1, keepdims=True) * obs.sum(axis=0, keepdims=True) / p.n
    stat = float(((obs - exp) ** 2 / exp).sum())
    df = (len(clusters) - 1) * (len(cats) - 1)
    flags = ()
    if np.any(exp < 5):
        flags = (f"expected count below 5 in {int((exp < 5).sum())} cells",)
    return IndexValue("chi_square", stat, HIGHER, p_value=chi2_sf(stat, df), df=(df,),
                      flags=flags)


def _one_way(p: Partition, y: np.ndarray):
    clusters = _nonempty(p)
    k, n = len(clusters), p.n
    grand = y.mean()
    ssb = ssw = 0.0
    for j in clusters:
        g = y[p.labels == j]
        m = g.mean()
        ssb += g.size * (m - grand) ** 2
        ssw += float(((g - m) ** 2).sum())
    return ssb, ssw, k, n


def anova_f_association(p: Partition, v: Sequence[float]) -> IndexValue:
    """One-way ANOVA F test of a numeric variable across clusters."""
    y = np.asarray(v, dtype=float)
    if y.size != p.n:
        raise MismatchedObjectsError("external variable length differs from partition")
    ssb, ssw, k, n = _one_way(p, y)
    if k < 2 or n <= k:
        raise UndefinedTestError(f"ANOVA needs k >= 2 and n > k (k={k}, n={n})")
    df = (k - 1, n - k)
    if ssw == 0:
        if ssb == 0:
            raise UndefinedTestError("zero within- and between-cluster variance")
        return IndexValue("anova_f", math.inf, HIGHER, p_value=0.0, df=df,
                          flags=("degenerate: zero within-cluster variance",))
    f = (ssb / df[0]) / (ssw / df[1])
    return IndexValue("anova_f", f, HIGHER, p_value=f_sf(f, *df), df=df)


def variable_f_statistics(data: FeatureDataset, p: Partition) -> dict:
    """Between-cluster F statistic per variable (``None`` where undefined)."""
    out = {}
    for j, var in enumerate(data.variable_ids):
        try:
            out[var] = anova_f_association(p, data.values[:, j]).value
        except UndefinedTestError:
            out[var] = None
    return out
