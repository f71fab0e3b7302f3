"""Validation of cluster analysis results on separate validation data."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    ClusteringMethod,
    DissimilarityDataset,
    FeatureDataset,
    Partition,
    canonicalize,
    contingency_table,
    standardize,
)
from .split import SplitPair, ingest_pair, split_descriptive, split_inferential  # noqa: E402
from .cluster import ClusterModel, apply_method  # noqa: E402
