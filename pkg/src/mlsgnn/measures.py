"""Feature-space similarity measures and their kNN subgraphs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateFeatureError, DimensionError, DomainError
from .graph import SparseGraph

COSINE, GAUSSIAN, SPARSITY = "cosine", "gaussian", "sparsity"


@dataclass(frozen=True)
class MeasureKind:
    """A similarity measure.

    ``bandwidth`` is the heat-kernel ``t`` (``None`` picks the mean pairwise
    squared distance). ``k`` is the neighbor count of the sparsity measure
    (``None`` reuses the kNN cut passed to :func:`build_measure_subgraphs`).
    """

    tag: str
    bandwidth: float | None = None
    k: int | None = None

    def __post_init__(self):
        if self.tag not in (COSINE, GAUSSIAN, SPARSITY):
            raise DomainError(f"unknown measure {self.tag!r}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise DomainError("Gaussian bandwidth t must be positive")
        if self.k is not None and self.k < 1:
            raise DomainError("sparsity neighbor count must be positive")


def default_measures():
    return [MeasureKind(COSINE), MeasureKind(GAUSSIAN), MeasureKind(SPARSITY)]


@dataclass(frozen=True)
class MeasureSubgraph:
    similarity: np.ndarray
    adjacency: SparseGraph
    k: int
    measure: MeasureKind


def _gram(x):
    g = x @ x.T
    return g.toarray() if sp.issparse(g) else np.asarray(g)


def squared_distances(x):
    """Pairwise squared Euclidean distances with an exact zero diagonal."""
    g = _gram(x)
    sq = np.diag(g).copy()
    e = sq[:, None] + sq[None, :] - 2.0 * g
    np.maximum(e, 0.0, out=e)
    np.fill_diagonal(e, 0.0)
    # keeps e exactly symmetric despite rounding in the Gram matrix
    return np.minimum(e, e.T)


def mean_squared_distance(x):
    e = squared_distances(x)
    n = e.shape[0]
    if n < 2:
        raise DomainError("need at least two nodes for a pairwise mean")
    return float(e[np.triu_indices(n, 1)].mean())


def cosine_similarity(x):
    g = _gram(x)
    norms = np.sqrt(np.diag(g))
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DegenerateFeatureError(zero[0], f"node {zero[0]} has zero norm; cosine undefined")
    # normalize rows first so the result does not depend on row scale
    if sp.issparse(x):
        xn = sp.diags(1.0 / norms) @ x
    else:
        xn = x / norms[:, None]
    s = _gram(xn)
    np.clip(s, -1.0, 1.0, out=s)
    return s


def gaussian_similarity(x, bandwidth=None):
    e = squared_distances(x)
    if bandwidth is None:
        n = e.shape[0]
        bandwidth = float(e[np.triu_indices(n, 1)].mean()) if n > 1 else 1.0
        if bandwidth == 0.0:
            bandwidth = 1.0
    if not bandwidth > 0:
        raise DomainError("Gaussian bandwidth t must be positive")
    return np.exp(-e / bandwidth)


def sparsity_similarity(x, k):
    """Parameter-free weights over the ``k`` nearest neighbors of each node.

    With ``e`` the ascending squared distances to the other nodes,
    ``w_j = (e_(k+1) - e_j) / (k e_(k+1) - sum_{m<=k} e_m)`` for the first
    ``k``; every other entry is zero. Each row sums to one. When all of the
    first ``k + 1`` distances coincide the weights fall back to ``1/k``.
    """
    e = squared_distances(x)
    n = e.shape[0]
    if not 1 <= k <= n - 2:
        raise DomainError(f"sparsity needs 1 <= k <= n - 2, got k={k}, n={n}")
    masked = e.copy()
    np.fill_diagonal(masked, np.inf)
    order = np.argsort(masked, axis=1, kind="stable")[:, : k + 1]
    near = np.take_along_axis(masked, order, axis=1)
    e_next = near[:, k:k + 1]
    top = near[:, :k]
    denom = k * e_next - top.sum(axis=1, keepdims=True)
    flat = denom[:, 0] <= 0
    safe = np.where(flat[:, None], 1.0, denom)
    w = np.where(flat[:, None], 1.0 / k, (e_next - top) / safe)
    s = np.zeros((n, n))
    np.put_along_axis(s, order[:, :k], w, axis=1)
    return s


def similarity_matrix(x, measure, k=None):
    if measure.tag == COSINE:
        return cosine_similarity(x)
    if measure.tag == GAUSSIAN:
        return gaussian_similarity(x, measure.bandwidth)
    ks = measure.k if measure.k is not None else k
    if ks is None:
        raise DomainError("sparsity measure needs a neighbor count")
    return sparsity_similarity(x, ks)


def knn_sparsify(s, k):
    """Binary symmetric kNN graph: top-``k`` off-diagonal entries per row
    (ties to the lower column), then OR-symmetrized."""
    s = np.asarray(s, dtype=np.float64)
    n = s.shape[0]
    if s.shape != (n, n):
        raise DimensionError(f"similarity matrix must be square, got {s.shape}")
    if not 1 <= k < n:
        raise DomainError(f"kNN needs 1 <= k < n, got k={k}, n={n}")
    neg = -s
    np.fill_diagonal(neg, np.inf)
    picks = np.argsort(neg, axis=1, kind="stable")[:, :k]
    rows = np.repeat(np.arange(n), k)
    cols = picks.ravel()
    a = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    a = (a + a.T).tocsr()
    a.data[:] = 1.0
    a.sort_indices()
    return SparseGraph(a, True)


def build_measure_subgraphs(x, measures=None, k=7):
    measures = default_measures() if measures is None else list(measures)
    if not measures:
        raise DomainError("need at least one measure")
    out = []
    for m in measures:
        s = similarity_matrix(x, m, k)
        out.append(MeasureSubgraph(s, knn_sparsify(s, k), k, m))
    return out
