"""Plot data: principal-component scores and silhouette listings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import FeatureDataset, Partition
from ..indices import silhouette_values


@dataclass(frozen=True, eq=False)
class Projection:
    """Linear principal-component axes fitted on one dataset."""

    center: np.ndarray
    loadings: np.ndarray  # p x n_components, columns are axes
    variable_ids: tuple

    def scores(self, data: FeatureDataset) -> np.ndarray:
        x = data.values
        if tuple(data.variable_ids) != self.variable_ids:
            x = data.take_variables(self.variable_ids).values
        return (x - self.center) @ self.loadings


def fit_projection(data: FeatureDataset, n_components: int = 2) -> Projection:
    """Principal axes of the centred data.

    Each axis is signed so that its largest-magnitude loading is positive
    (ties: the first such component).
    """
    x = data.values
    center = x.mean(axis=0)
    _, _, vt = np.linalg.svd(x - center, full_matrices=False)
    axes = vt[:n_components].T.copy()
    for j in range(axes.shape[1]):
        col = axes[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            axes[:, j] = -col
    return Projection(center, axes, tuple(data.variable_ids))


def score_rows(proj: Projection, data: FeatureDataset, cluster_labels, dataset: str):
    s = proj.scores(data)
    return [
        {"object_id": oid, "pc1": float(row[0]), "pc2": float(row[1]),
         "cluster": int(lab), "dataset": dataset}
        for oid, row, lab in zip(data.object_ids, s, cluster_labels)
    ]


def silhouette_rows(data, p: Partition, cluster_order, display_labels=None):
    """Silhouette values grouped by ``cluster_order``, descending within cluster.

    ``display_labels`` maps a partition label to the label written out (used
    to show matched discovery labels for method-based clusterings).
    """
    s = silhouette_values(data, p)
    display_labels = display_labels or {}
    rows = []
    order = 0
    for lab in cluster_order:
        idx = np.flatnonzero(p.labels == lab)
        idx = idx[np.lexsort((idx, -s[idx]))]
        for i in idx:
            order += 1
            rows.append({"object_id": p.object_ids[i],
                         "cluster": int(display_labels.get(lab, lab)),
                         "s_value": float(s[i]), "order": order})
    return rows
