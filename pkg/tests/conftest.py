import sys
from pathlib import Path

import numpy as np
import pytest

from mlsgnn.graph import LabeledDataset, SparseGraph, make_splits
from mlsgnn.measures import build_measure_subgraphs
from mlsgnn.training import ModelGraphs

DATA = Path(__file__).parent / "data"
FIXTURE_INI = DATA / "two_blob" / "two_blob.ini"


def tiny_dataset(n=8, d=5, n_classes=2, seed=0, p_edge=0.35):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d)) + 0.2
    labels = np.arange(n) % n_classes
    upper = np.triu(rng.random((n, n)) < p_edge, 1)
    # ring keeps every node connected
    ring = [(i, (i + 1) % n) for i in range(n)]
    edges = np.vstack([np.argwhere(upper), ring])
    ds = LabeledDataset(x, SparseGraph.from_edges(n, edges), labels, n_classes)
    return make_splits(ds, 2, val_size=2, test_size=2, seed=seed)


def tiny_graphs(ds, k=3, seed=0):
    from mlsgnn.semantic import WalkConfig, build_semantic_graph

    subs = build_measure_subgraphs(ds.features, k=k)
    _, ppmi = build_semantic_graph(ds.topology, WalkConfig(gamma=10, seed=seed))
    return ModelGraphs.from_parts(subs, ds.topology, ppmi)


@pytest.fixture
def tiny():
    ds = tiny_dataset()
    return ds, tiny_graphs(ds)


@pytest.fixture(scope="session")
def fixture_ini():
    return FIXTURE_INI


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in mod.LINES:
            terminalreporter.write_line(line)
