"""Graph and dataset containers, splits and GCN-style normalization."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .errors import (
    BoundsError,
    DataError,
    DimensionError,
    DomainError,
    InsufficientLabelsError,
)

UNLABELED = -1


def _freeze(a):
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SparseGraph:
    """Nonnegative adjacency over ``n`` nodes stored as a canonical CSR matrix.

    Use :meth:`from_entries` or :meth:`from_edges` rather than building one
    directly; both enforce the invariants (indices in range, nonnegative
    weights, no duplicate pairs, symmetry when flagged).
    """

    adjacency: sp.csr_matrix
    symmetric: bool = True

    def __post_init__(self):
        a = self.adjacency
        if a.shape[0] != a.shape[1]:
            raise DimensionError(f"adjacency must be square, got {a.shape}")
        if a.nnz and a.data.min() < 0:
            raise DomainError("adjacency weights must be nonnegative")
        if self.symmetric and a.nnz:
            diff = abs(a - a.T)
            if diff.nnz and diff.max() > 0:
                raise DataError("graph flagged symmetric but (i,j,w) lacks (j,i,w)")
        _freeze(a.data)
        _freeze(a.indices)
        _freeze(a.indptr)

    @classmethod
    def from_entries(cls, n, entries, symmetric=True):
        """Build from ``(row, col, weight)`` triples; duplicates are an error."""
        entries = list(entries)
        if not entries:
            return cls(sp.csr_matrix((n, n), dtype=np.float64), symmetric)
        rows, cols, weights = (np.asarray(x) for x in zip(*entries))
        rows = rows.astype(np.int64)
        cols = cols.astype(np.int64)
        if rows.min() < 0 or cols.min() < 0 or rows.max() >= n or cols.max() >= n:
            raise BoundsError(f"entry index outside [0, {n})")
        keys = rows * n + cols
        if np.unique(keys).size != keys.size:
            raise DataError("duplicate (row, col) entries")
        a = sp.csr_matrix((weights.astype(np.float64), (rows, cols)), shape=(n, n))
        a.sort_indices()
        return cls(a, symmetric)

    @classmethod
    def from_edges(cls, n, edges):
        """Unweighted undirected graph from an edge list.

        Self-loops are dropped, direction is ignored and duplicates collapse
        to a single edge of weight 1.
        """
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise BoundsError(f"edge endpoint outside [0, {n})")
        edges = edges[edges[:, 0] != edges[:, 1]]
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        a = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
        a.sum_duplicates()
        a.data[:] = 1.0
        a.sort_indices()
        return cls(a, True)

    @classmethod
    def from_matrix(cls, matrix, symmetric=True):
        a = sp.csr_matrix(matrix, dtype=np.float64, copy=True)
        a.eliminate_zeros()
        a.sort_indices()
        return cls(a, symmetric)

    @property
    def n(self):
        return self.adjacency.shape[0]

    @property
    def nnz(self):
        return self.adjacency.nnz

    @property
    def num_edges(self):
        """Undirected edge count (off-diagonal pairs counted once)."""
        a = sp.triu(self.adjacency, k=1)
        return int(a.nnz) + int((self.adjacency.diagonal() != 0).sum())

    def entries(self):
        coo = self.adjacency.tocoo()
        return list(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))

    def toarray(self):
        return self.adjacency.toarray()


@dataclass(frozen=True)
class NormalizedGraph:
    """``D^-1/2 (A + I) D^-1/2`` together with the degree vector of ``A + I``."""

    values: sp.csr_matrix
    degree: np.ndarray

    @property
    def n(self):
        return self.values.shape[0]

    def toarray(self):
        return self.values.toarray()


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray | sp.csr_matrix
    topology: SparseGraph
    labels: np.ndarray
    n_classes: int
    train: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    val: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    test: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    name: str = "dataset"

    def __post_init__(self):
        n = self.features.shape[0]
        if n < 1 or self.features.shape[1] < 1:
            raise DimensionError("feature matrix must be at least 1x1")
        if self.topology.n != n:
            raise DimensionError(f"topology has {self.topology.n} nodes, features {n}")
        if self.labels.shape != (n,):
            raise DimensionError("labels must hold one entry per node")
        if self.n_classes < 2:
            raise DataError("need at least two classes")
        vals = self.features.data if sp.issparse(self.features) else self.features
        if not np.all(np.isfinite(vals)):
            raise DataError("feature matrix has non-finite entries")
        for name in ("train", "val", "test"):
            idx = np.array(getattr(self, name), dtype=np.int64).ravel()
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise BoundsError(f"{name} split has node ids outside [0, {n})")
            object.__setattr__(self, name, _freeze(idx))
        sets = [set(self.train.tolist()), set(self.val.tolist()), set(self.test.tolist())]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise DataError("train/val/test splits overlap")
        if self.train.size and np.any(self.labels[self.train] == UNLABELED):
            raise DataError("every training node must be labeled")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def with_splits(self, train, val, test):
        return replace(
            self,
            train=np.asarray(train, dtype=np.int64),
            val=np.asarray(val, dtype=np.int64),
            test=np.asarray(test, dtype=np.int64),
        )


def make_splits(dataset, labels_per_class, val_size=500, test_size=1000, seed=0):
    """Planetoid-style split: a fixed number of training nodes per class, then
    disjoint validation and test sets drawn from the remaining labeled nodes."""
    if labels_per_class < 1:
        raise InsufficientLabelsError("labels_per_class must be at least 1")
    rng = np.random.default_rng(seed)
    labels = dataset.labels
    train = []
    for c in range(dataset.n_classes):
        members = np.flatnonzero(labels == c)
        if members.size < labels_per_class:
            raise InsufficientLabelsError(
                f"class {c} has {members.size} labeled nodes, need {labels_per_class}"
            )
        train.append(rng.permutation(members)[:labels_per_class])
    train = np.sort(np.concatenate(train))
    rest = np.setdiff1d(np.flatnonzero(labels != UNLABELED), train)
    if rest.size < val_size + test_size:
        raise InsufficientLabelsError(
            f"{rest.size} labeled nodes left for val+test, need {val_size + test_size}"
        )
    rest = rng.permutation(rest)
    val = np.sort(rest[:val_size])
    test = np.sort(rest[val_size:val_size + test_size])
    return dataset.with_splits(train, val, test)


def degrees(graph):
    """Number of distinct neighbors of each node (self-loops ignored)."""
    a = graph.adjacency if isinstance(graph, SparseGraph) else sp.csr_matrix(graph)
    a = sp.csr_matrix(a, copy=True)
    a.setdiag(0)
    a.eliminate_zeros()
    return np.diff(a.indptr).astype(np.int64)


def normalize_adjacency(graph):
    """Symmetric GCN normalization with one self-loop per node.

    Isolated nodes end up with a unit self-loop row.
    """
    a = graph.adjacency if isinstance(graph, SparseGraph) else sp.csr_matrix(graph)
    a = sp.csr_matrix(a, dtype=np.float64)
    if a.nnz and a.data.min() < 0:
        raise DomainError("adjacency has negative weights")
    b = (a + sp.identity(a.shape[0], format="csr")).tocsr()
    b.sort_indices()
    deg = np.asarray(b.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    rows = np.repeat(np.arange(b.shape[0]), np.diff(b.indptr))
    # s_i * s_j first so that (i, j) and (j, i) round identically
    vals = (inv_sqrt[rows] * inv_sqrt[b.indices]) * b.data
    out = sp.csr_matrix((vals, b.indices.copy(), b.indptr.copy()), shape=b.shape)
    return NormalizedGraph(out, deg)
