"""Discovery/validation splitting.

Inferential clustering splits along objects, descriptive clustering along
variables. Permutations are drawn over the *sorted* id list so the split does
not depend on on-disk row order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .core import Dataset, DissimilarityDataset, FeatureDataset, content_hash
from .errors import (
    InvalidDataError,
    PartTooSmallError,
    SchemaMismatchError,
    UnsupportedModeError,
)

DEFAULT_RATIO = 0.5
MODES = ("inferential", "descriptive")


@dataclass(frozen=True, eq=False)
class SplitPair:
    discovery: Dataset
    validation: Dataset
    mode: str
    ratio: float
    seed: Optional[int] = None
    cross_block: Optional[np.ndarray] = None

    @property
    def form(self) -> str:
        return self.discovery.form

    def manifest(self) -> dict:
        out = {
            "mode": self.mode,
            "form": self.form,
            "ratio": self.ratio,
            "seed": self.seed,
            "discovery": {"object_ids": list(self.discovery.object_ids),
                          "content_hash": content_hash(self.discovery)},
            "validation": {"object_ids": list(self.validation.object_ids),
                           "content_hash": content_hash(self.validation)},
            "has_cross_block": self.cross_block is not None,
        }
        if isinstance(self.discovery, FeatureDataset):
            out["discovery"]["variable_ids"] = list(self.discovery.variable_ids)
            out["validation"]["variable_ids"] = list(self.validation.variable_ids)
        return out


def _check_ratio(ratio):
    if not 0 < ratio < 1:
        raise InvalidDataError(f"ratio must lie strictly between 0 and 1, got {ratio}")


def discovery_size(ratio: float, n: int) -> int:
    # round() guards against e.g. 0.3 * 10 == 3.0000000000000004
    return math.ceil(round(ratio * n, 9))


def _seeded_order(ids, seed, strata=None):
    """Ids in the order in which they are dealt to the discovery side."""
    ordered = sorted(ids)
    rng = np.random.default_rng(seed)
    if strata is None:
        return [ordered[i] for i in rng.permutation(len(ordered))]
    groups = {}
    for oid in ordered:
        groups.setdefault(str(strata[oid]), []).append(oid)
    keyed = []
    for g in sorted(groups):
        members = groups[g]
        perm = rng.permutation(len(members))
        for rank, i in enumerate(perm):
            keyed.append(((rank + 0.5) / len(members), g, members[i]))
    keyed.sort()
    return [oid for _, _, oid in keyed]


def _partition_ids(ids, ratio, seed, strata=None):
    n = len(ids)
    n1 = discovery_size(ratio, n)
    if n1 < 2 or n - n1 < 2:
        raise PartTooSmallError(f"split of {n} into {n1}/{n - n1} leaves a part with < 2 items")
    dealt = _seeded_order(ids, seed, strata)
    first = set(dealt[:n1])
    # keep the input order within each part
    return [i for i in ids if i in first], [i for i in ids if i not in first]


def split_inferential(data: Dataset, ratio: float = DEFAULT_RATIO, seed: int = 0,
                      strata: Optional[Mapping[str, object]] = None) -> SplitPair:
    """Split along objects; dissimilarity input also keeps the cross block."""
    _check_ratio(ratio)
    if strata is not None:
        missing = [o for o in data.object_ids if o not in strata]
        if missing:
            raise SchemaMismatchError("strata undefined for objects", missing[:10])
    ids1, ids2 = _partition_ids(list(data.object_ids), ratio, seed, strata)
    d1, d2 = data.take_objects(ids1), data.take_objects(ids2)
    cross = None
    if isinstance(data, DissimilarityDataset):
        pos = {o: i for i, o in enumerate(data.object_ids)}
        cross = data.d[np.ix_([pos[i] for i in ids1], [pos[i] for i in ids2])].copy()
        cross.flags.writeable = False
    return SplitPair(d1, d2, "inferential", float(ratio), seed, cross)


def split_descriptive(data: Dataset, ratio: float = DEFAULT_RATIO, seed: int = 0) -> SplitPair:
    """Split along variables; both parts keep every object."""
    if not isinstance(data, FeatureDataset):
        raise UnsupportedModeError(
            "descriptive splitting needs object-by-variable data; "
            "proximity data cannot be split into variable sets"
        )
    _check_ratio(ratio)
    v1, v2 = _partition_ids(list(data.variable_ids), ratio, seed)
    return SplitPair(data.take_variables(v1), data.take_variables(v2),
                     "descriptive", float(ratio), seed)


def split(data: Dataset, mode: str = "inferential", ratio: float = DEFAULT_RATIO,
          seed: int = 0, strata=None) -> SplitPair:
    if mode == "inferential":
        return split_inferential(data, ratio, seed, strata)
    if mode == "descriptive":
        if strata is not None:
            raise UnsupportedModeError("stratification applies to object splits only")
        return split_descriptive(data, ratio, seed)
    raise UnsupportedModeError(f"unknown mode {mode!r}")


def ingest_pair(discovery, validation, mode: str = "inferential", form: str = "feature") -> SplitPair:
    """Pair two independently collected datasets after checking their schemas.

    ``discovery``/``validation`` are datasets or CSV paths.
    """
    from .io import read_dataset

    if not isinstance(discovery, (FeatureDataset, DissimilarityDataset)):
        discovery = read_dataset(discovery, form)
    if not isinstance(validation, (FeatureDataset, DissimilarityDataset)):
        validation = read_dataset(validation, form)
    if discovery.form != validation.form:
        raise SchemaMismatchError("discovery and validation data have different forms")
    if mode not in MODES:
        raise UnsupportedModeError(f"unknown mode {mode!r}")

    if mode == "inferential":
        overlap = sorted(set(discovery.object_ids) & set(validation.object_ids))
        if overlap:
            raise SchemaMismatchError("object ids occur in both datasets", overlap)
        if isinstance(discovery, FeatureDataset):
            a, b = set(discovery.variable_ids), set(validation.variable_ids)
            if a != b:
                raise SchemaMismatchError("variable ids differ", sorted(a ^ b))
            validation = validation.take_variables(discovery.variable_ids)
    else:
        a, b = set(discovery.object_ids), set(validation.object_ids)
        if a != b:
            raise SchemaMismatchError("object ids differ", sorted(a ^ b))
        validation = validation.take_objects(discovery.object_ids)

    if mode == "inferential" or not isinstance(discovery, FeatureDataset):
        n1, n2 = discovery.n_objects, validation.n_objects
    else:
        n1, n2 = discovery.n_variables, validation.n_variables
    return SplitPair(discovery, validation, mode, n1 / (n1 + n2), None, None)
