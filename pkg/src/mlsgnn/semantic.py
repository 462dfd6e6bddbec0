"""Random-walk co-occurrence counts, PPMI and its symmetric normalization.

Walk steps draw their uniforms from a counter-based generator: the value for
``(seed, start node, walk index, step)`` is a SplitMix64 hash of those four
integers. Any walk can therefore be regenerated on its own, and the sampled
corpus does not depend on how the work is chunked across threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import BoundsError, DomainError, EmptyFrequencyError
from .graph import SparseGraph, degrees

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix64(x):
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


def counter_uniform(seed, node, walk, step):
    """Uniform doubles in [0, 1) keyed by (seed, node, walk, step)."""
    with np.errstate(over="ignore"):
        h = _mix64(np.uint64(seed % 2**64) + _GOLDEN)
        h = _mix64(h ^ (np.asarray(node, dtype=np.uint64) + _GOLDEN))
        h = _mix64(h ^ (np.asarray(walk, dtype=np.uint64) * _GOLDEN + np.uint64(1)))
        h = _mix64(h ^ (np.asarray(step, dtype=np.uint64) + np.uint64(0x632BE59BD9B4E019)))
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 2**53)


@dataclass(frozen=True)
class WalkConfig:
    """Walk sampling and PPMI settings.

    ``window`` defaults to ``path_len``. ``max_tail_walks`` optionally caps the
    degree-scaled walk count of tail nodes.
    """

    gamma: int = 100
    path_len: int = 3
    window: int | None = None
    tail_threshold: int = 5
    neg_shift: float = 1.0
    seed: int = 0
    max_tail_walks: int | None = None

    def __post_init__(self):
        if self.gamma < 1:
            raise DomainError("gamma must be >= 1")
        if self.path_len < 2:
            raise DomainError("path_len must be >= 2")
        if not 1 <= self.effective_window < self.path_len + 1:
            raise DomainError("window must satisfy 1 <= window <= path_len")
        if self.tail_threshold < 0:
            raise DomainError("tail_threshold must be >= 0")
        if not self.neg_shift >= 1:
            raise DomainError("neg_shift must be >= 1")
        if self.max_tail_walks is not None and self.max_tail_walks < 1:
            raise DomainError("max_tail_walks must be >= 1")

    @property
    def effective_window(self):
        return self.path_len if self.window is None else self.window


@dataclass(frozen=True)
class FrequencyMatrix:
    counts: sp.csr_matrix

    @property
    def n(self):
        return self.counts.shape[0]

    def toarray(self):
        return self.counts.toarray()


@dataclass(frozen=True)
class PpmiGraph:
    P: sp.csr_matrix
    degree: np.ndarray
    P_norm: sp.csr_matrix
    joint: sp.csr_matrix
    row_marginal: np.ndarray
    col_marginal: np.ndarray


def _adjacency(graph):
    a = graph.adjacency if isinstance(graph, SparseGraph) else sp.csr_matrix(graph)
    a = sp.csr_matrix(a, dtype=np.float64)
    a.sort_indices()
    return a


def transition_matrix(graph):
    """Row-stochastic walk matrix; isolated nodes get a self-loop row."""
    a = _adjacency(graph)
    n = a.shape[0]
    rowsum = np.asarray(a.sum(axis=1)).ravel()
    isolated = rowsum == 0
    inv = np.divide(1.0, rowsum, out=np.zeros(n), where=~isolated)
    t = (sp.diags(inv) @ a).tocsr()
    if isolated.any():
        t = (t + sp.diags(isolated.astype(np.float64))).tocsr()
    t.sort_indices()
    return t


def walk_counts(graph, config):
    """Number of walks started from every node."""
    deg = degrees(graph)
    counts = np.where(deg > config.tail_threshold, config.gamma, config.gamma * deg)
    if config.max_tail_walks is not None:
        tail = (deg >= 1) & (deg <= config.tail_threshold)
        counts = np.where(tail, np.minimum(counts, config.max_tail_walks), counts)
    return counts.astype(np.int64)


def _walk_chunk(a, cum, rowsum, starts, walk_ids, path_len, seed):
    paths = np.empty((starts.size, path_len + 1), dtype=np.int64)
    paths[:, 0] = starts
    cur = starts
    for step in range(1, path_len + 1):
        u = counter_uniform(seed, starts, walk_ids, step)
        lo = a.indptr[cur]
        hi = a.indptr[cur + 1]
        base = np.where(lo > 0, cum[lo - 1], 0.0)
        target = base + u * rowsum[cur]
        idx = np.searchsorted(cum, target, side="right")
        idx = np.clip(idx, lo, hi - 1)
        cur = a.indices[idx]
        paths[:, step] = cur
    return paths


def sample_walks(graph, config, workers=1, chunk_size=1 << 16):
    """Sample every walk; returns an int array of shape ``(walks, path_len+1)``.

    Rows are ordered by start node, then walk index. Steps follow the
    edge-weight transition probabilities.
    """
    a = _adjacency(graph)
    counts = walk_counts(graph, config)
    total = int(counts.sum())
    if total == 0:
        return np.empty((0, config.path_len + 1), dtype=np.int64)
    starts = np.repeat(np.arange(a.shape[0], dtype=np.int64), counts)
    offsets = np.repeat(np.cumsum(counts) - counts, counts)
    walk_ids = np.arange(total, dtype=np.int64) - offsets
    cum = np.cumsum(a.data)
    rowsum = np.asarray(a.sum(axis=1)).ravel()
    bounds = list(range(0, total, chunk_size)) + [total]
    jobs = [(starts[lo:hi], walk_ids[lo:hi]) for lo, hi in zip(bounds[:-1], bounds[1:])]

    def run(job):
        return _walk_chunk(a, cum, rowsum, job[0], job[1], config.path_len, config.seed)

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(job) for job in jobs]
    return np.concatenate(parts, axis=0)


def _pair_counts(paths, window, n):
    rows, cols = [], []
    length = paths.shape[1]
    for off in range(1, min(window, length - 1) + 1):
        rows.append(paths[:, :-off].ravel())
        cols.append(paths[:, off:].ravel())
    if not rows:
        return sp.csr_matrix((n, n), dtype=np.int64)
    r = np.concatenate(rows + cols)
    c = np.concatenate(cols + rows)
    f = sp.csr_matrix((np.ones(r.size, dtype=np.int64), (r, c)), shape=(n, n))
    f.sum_duplicates()
    return f


def build_frequency(paths, window, n, workers=1, chunk_size=1 << 16):
    """Symmetric co-occurrence counts of node pairs at most ``window`` apart."""
    if window < 1:
        raise DomainError("window must be >= 1")
    if isinstance(paths, np.ndarray) and paths.ndim == 2:
        groups = [paths]
    else:
        by_len = {}
        for p in paths:
            by_len.setdefault(len(p), []).append(p)
        groups = [np.asarray(v, dtype=np.int64) for v in by_len.values()]
    chunks = []
    for g in groups:
        g = np.asarray(g, dtype=np.int64)
        if g.size and (g.min() < 0 or g.max() >= n):
            raise BoundsError(f"path node id outside [0, {n})")
        chunks.extend(g[i:i + chunk_size] for i in range(0, len(g), chunk_size))
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda c: _pair_counts(c, window, n), chunks))
    else:
        parts = [_pair_counts(c, window, n) for c in chunks]
    f = sp.csr_matrix((n, n), dtype=np.int64)
    for part in parts:
        f = f + part
    f = sp.csr_matrix(f, dtype=np.int64)
    f.sort_indices()
    return FrequencyMatrix(f)


def symmetric_normalize(p):
    """``D^-1/2 P D^-1/2`` with no self-loops; zero-degree rows stay zero."""
    p = sp.csr_matrix(p, dtype=np.float64)
    if p.nnz and p.data.min() < 0:
        raise DomainError("P must be nonnegative")
    p.sort_indices()
    deg = np.asarray(p.sum(axis=1)).ravel()
    inv = np.divide(1.0, np.sqrt(deg), out=np.zeros_like(deg), where=deg > 0)
    rows = np.repeat(np.arange(p.shape[0]), np.diff(p.indptr))
    vals = (inv[rows] * inv[p.indices]) * p.data
    out = sp.csr_matrix((vals, p.indices.copy(), p.indptr.copy()), shape=p.shape)
    out.eliminate_zeros()
    return out


def compute_ppmi(freq, neg_shift=1.0):
    """Shifted positive PMI of the co-occurrence counts.

    ``P_ij = max(ln(p_ij / (p_i* p_*j)) - ln(neg_shift), 0)``; ``neg_shift=1``
    is plain PPMI.
    """
    f = freq.counts if isinstance(freq, FrequencyMatrix) else sp.csr_matrix(freq)
    f = sp.csr_matrix(f)
    f.eliminate_zeros()
    f.sort_indices()
    if neg_shift < 1:
        raise DomainError("neg_shift must be >= 1")
    total = f.sum()
    if total <= 0:
        raise EmptyFrequencyError("frequency matrix is all zero")
    n = f.shape[0]
    row_counts = np.asarray(f.sum(axis=1)).ravel()
    col_counts = np.asarray(f.sum(axis=0)).ravel()
    p_row = row_counts / total
    p_col = col_counts / total
    joint = sp.csr_matrix((f.data / total, f.indices, f.indptr), shape=(n, n))
    rows = np.repeat(np.arange(n), np.diff(f.indptr))
    pmi = np.log(joint.data / (p_row[rows] * p_col[f.indices])) - np.log(neg_shift)
    vals = np.maximum(pmi, 0.0)
    p = sp.csr_matrix((vals, f.indices.copy(), f.indptr.copy()), shape=(n, n))
    p.eliminate_zeros()
    p.sort_indices()
    degree = np.asarray(p.sum(axis=1)).ravel()
    return PpmiGraph(p, degree, symmetric_normalize(p), joint, p_row, p_col)


def build_semantic_graph(graph, config, workers=1):
    """Walks -> counts -> PPMI in one call; returns ``(FrequencyMatrix, PpmiGraph)``."""
    n = graph.n if isinstance(graph, SparseGraph) else graph.shape[0]
    paths = sample_walks(graph, config, workers=workers)
    freq = build_frequency(paths, config.effective_window, n, workers=workers)
    return freq, compute_ppmi(freq, config.neg_shift)
