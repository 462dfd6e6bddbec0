"""Glue: build every propagation input for a dataset, and a synthetic benchmark."""

from __future__ import annotations

import numpy as np

from .graph import UNLABELED, LabeledDataset, SparseGraph, make_splits
from .measures import build_measure_subgraphs, default_measures
from .semantic import WalkConfig, build_semantic_graph
from .training import ModelGraphs


def prepare_graphs(dataset, measures=None, k=7, walk=None, workers=1):
    """Returns ``(ModelGraphs, measure subgraphs, FrequencyMatrix, PpmiGraph)``."""
    measures = default_measures() if measures is None else measures
    walk = WalkConfig() if walk is None else walk
    subgraphs = build_measure_subgraphs(dataset.features, measures, k)
    freq, ppmi = build_semantic_graph(dataset.topology, walk, workers=workers)
    graphs = ModelGraphs.from_parts(subgraphs, dataset.topology, ppmi)
    return graphs, subgraphs, freq, ppmi


def two_blob_dataset(n=200, d=16, separation=2.5, noise=1.0, p_in=0.06, p_out=0.012,
                     labels_per_class=20, val_size=40, test_size=120, seed=0):
    """Two Gaussian feature blobs with a planted two-community topology.

    Class ``c`` nodes have features ``N(mu_c, noise^2 I)`` with the two means
    ``separation`` apart, and edges appear with probability ``p_in`` inside a
    community and ``p_out`` across.
    """
    rng = np.random.default_rng(seed)
    labels = np.repeat([0, 1], [n // 2, n - n // 2])
    labels = rng.permutation(labels)
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    means = np.stack([-0.5 * separation * direction, 0.5 * separation * direction])
    # shift away from the origin so no feature row has zero norm
    x = means[labels] + noise * rng.standard_normal((n, d)) + 0.1
    same = labels[:, None] == labels[None, :]
    probs = np.where(same, p_in, p_out)
    upper = np.triu(rng.random((n, n)) < probs, k=1)
    edges = np.argwhere(upper)
    ds = LabeledDataset(
        features=x,
        topology=SparseGraph.from_edges(n, edges),
        labels=labels.astype(np.int64),
        n_classes=2,
        name="two_blob",
    )
    return make_splits(ds, labels_per_class, val_size, test_size, seed=seed)


__all__ = ["prepare_graphs", "two_blob_dataset", "UNLABELED"]
