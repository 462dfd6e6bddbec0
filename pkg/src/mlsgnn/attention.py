"""Attention layers: per-node fusion of measure subgraphs and of channel embeddings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, IntegrityError
from .gnn import glorot


def softmax(logits, axis):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _softmax_backward(w, gw, axis):
    return w * (gw - (w * gw).sum(axis=axis, keepdims=True))


@dataclass
class GraphAttentionParams:
    """Perception weights ``h x n``, bias ``h x n`` and attention vector ``h``."""

    weight: np.ndarray
    bias: np.ndarray
    vector: np.ndarray

    @classmethod
    def init(cls, rng, n, hidden=64):
        return cls(glorot(rng, hidden, n), np.zeros((hidden, n)),
                   glorot(rng, hidden, 1).ravel())

    @classmethod
    def zeros(cls, n, hidden=64):
        return cls(np.zeros((hidden, n)), np.zeros((hidden, n)), np.zeros(hidden))

    @property
    def hidden(self):
        return self.vector.size


@dataclass
class ChannelAttentionParams:
    """Perception weights ``h x m``, bias ``h`` and attention vector ``h``."""

    weight: np.ndarray
    bias: np.ndarray
    vector: np.ndarray

    @classmethod
    def init(cls, rng, width, hidden=64):
        return cls(glorot(rng, hidden, width), np.zeros(hidden),
                   glorot(rng, hidden, 1).ravel())

    @classmethod
    def zeros(cls, width, hidden=64):
        return cls(np.zeros((hidden, width)), np.zeros(hidden), np.zeros(hidden))

    @property
    def hidden(self):
        return self.vector.size


class FusionPattern:
    """Shared CSR structure for fusing ``Q`` symmetric subgraphs.

    The structure is the union of all subgraph patterns plus the diagonal, so
    the fused graph, ``A + I`` and its normalization all live on the same
    index arrays. ``positions[q]`` maps the entries of subgraph ``q`` onto that
    structure and ``transpose`` maps entry ``(i, j)`` to ``(j, i)``.
    """

    def __init__(self, subgraphs):
        mats = [sp.csr_matrix(a, dtype=np.float64, copy=True) for a in subgraphs]
        if not mats:
            raise DimensionError("need at least one subgraph")
        n = mats[0].shape[0]
        for a in mats:
            if a.shape != (n, n):
                raise DimensionError(f"subgraph shape {a.shape} != ({n}, {n})")
        for a in mats:
            a.eliminate_zeros()
            a.sort_indices()
        self.n = n
        self.subgraphs = mats
        union = sp.identity(n, format="csr")
        for a in mats:
            union = union + abs(a)
        union = (union + union.T).tocsr()
        union.sort_indices()
        self.indptr = union.indptr.astype(np.int64)
        self.indices = union.indices.astype(np.int64)
        self.rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(self.indptr))
        keys = self.rows * n + self.indices
        self.positions = []
        for a in mats:
            arows = np.repeat(np.arange(n, dtype=np.int64), np.diff(a.indptr))
            self.positions.append(np.searchsorted(keys, arows * n + a.indices))
        self.transpose = np.searchsorted(keys, self.indices * n + self.rows)
        self.diagonal = np.searchsorted(keys, np.arange(n, dtype=np.int64) * (n + 1))

    @property
    def nnz(self):
        return self.indices.size

    def matrix(self, values):
        return sp.csr_matrix((values, self.indices, self.indptr), shape=(self.n, self.n))


@dataclass
class FusionCache:
    pattern: FusionPattern
    activations: list   # tanh outputs, one h x n array per subgraph
    weights: np.ndarray  # Q x n


def fuse_measure_values(pattern, params):
    """Fused symmetric graph as values on ``pattern``; returns ``(values, weights, cache)``."""
    if params.weight.shape[1] != pattern.n:
        raise DimensionError(f"perception weight has {params.weight.shape[1]} columns, n={pattern.n}")
    acts = []
    logits = np.empty((len(pattern.subgraphs), pattern.n))
    for q, a in enumerate(pattern.subgraphs):
        # W @ A^T computed as (A @ W^T)^T to stay sparse
        t = np.asarray(a @ params.weight.T).T + params.bias
        u = np.tanh(t)
        acts.append(u)
        logits[q] = params.vector @ u
    weights = softmax(logits, axis=0)
    raw = np.zeros(pattern.nnz)
    for q, a in enumerate(pattern.subgraphs):
        arows = pattern.rows[pattern.positions[q]]
        raw[pattern.positions[q]] += weights[q, arows] * a.data
    values = 0.5 * (raw + raw[pattern.transpose])
    return values, weights, FusionCache(pattern, acts, weights)


def fuse_measure_graphs(subgraphs, params):
    """Attention-weighted fusion of measure subgraphs.

    Returns the symmetrized fused adjacency (CSR) and the ``Q x n`` per-node
    measure weights, whose columns sum to one.
    """
    pattern = subgraphs if isinstance(subgraphs, FusionPattern) else FusionPattern(subgraphs)
    values, weights, _ = fuse_measure_values(pattern, params)
    a = pattern.matrix(values)
    return a, weights


def fuse_backward(grad_values, cache, params):
    """Parameter gradients given ``dL/d(fused values)`` on the pattern."""
    pattern = cache.pattern
    g_raw = 0.5 * (grad_values + grad_values[pattern.transpose])
    gw = np.empty_like(cache.weights)
    for q, a in enumerate(pattern.subgraphs):
        pos = pattern.positions[q]
        gw[q] = np.bincount(pattern.rows[pos], weights=g_raw[pos] * a.data, minlength=pattern.n)
    g_logits = _softmax_backward(cache.weights, gw, axis=0)
    g_weight = np.zeros_like(params.weight)
    g_bias = np.zeros_like(params.bias)
    g_vector = np.zeros_like(params.vector)
    for q, a in enumerate(pattern.subgraphs):
        u = cache.activations[q]
        g_vector += u @ g_logits[q]
        g_t = np.outer(params.vector, g_logits[q]) * (1.0 - u * u)
        g_bias += g_t
        g_weight += np.asarray(a.T @ g_t.T).T
    return {"weight": g_weight, "bias": g_bias, "vector": g_vector}


@dataclass
class AggregationCache:
    embeddings: list
    activations: list  # n x h per channel
    weights: np.ndarray  # n x K


def aggregate_forward(embeddings, params):
    """Returns ``(Z_agg, weights, cache)``."""
    embeddings = [np.asarray(z, dtype=np.float64) for z in embeddings]
    shape = embeddings[0].shape
    for z in embeddings:
        if z.shape != shape:
            raise DimensionError(f"embedding shapes differ: {z.shape} vs {shape}")
    if params.weight.shape[1] != shape[1]:
        raise DimensionError("attention weight width does not match embeddings")
    acts = [np.tanh(z @ params.weight.T + params.bias) for z in embeddings]
    logits = np.stack([u @ params.vector for u in acts], axis=1)
    weights = softmax(logits, axis=1)
    z_agg = sum(weights[:, c:c + 1] * z for c, z in enumerate(embeddings))
    return z_agg, weights, AggregationCache(embeddings, acts, weights)


def aggregate_embeddings(embeddings, params):
    """Per-node convex combination of channel embeddings; returns ``(Z_agg, n x K weights)``."""
    z_agg, weights, _ = aggregate_forward(embeddings, params)
    return z_agg, weights


def aggregate_backward(grad_agg, cache, params):
    """Returns ``(list of dL/dZ_c, parameter gradients)``."""
    w = cache.weights
    gw = np.stack([(grad_agg * z).sum(axis=1) for z in cache.embeddings], axis=1)
    g_logits = _softmax_backward(w, gw, axis=1)
    g_weight = np.zeros_like(params.weight)
    g_bias = np.zeros_like(params.bias)
    g_vector = np.zeros_like(params.vector)
    grads_z = []
    for c, (z, u) in enumerate(zip(cache.embeddings, cache.activations)):
        g_vector += u.T @ g_logits[:, c]
        g_t = np.outer(g_logits[:, c], params.vector) * (1.0 - u * u)
        g_weight += g_t.T @ z
        g_bias += g_t.sum(axis=0)
        grads_z.append(w[:, c:c + 1] * grad_agg + g_t @ params.weight)
    return grads_z, {"weight": g_weight, "bias": g_bias, "vector": g_vector}


STAT_COLUMNS = ("min", "q1", "median", "q3", "max", "mean")


def attention_statistics(weights, names=None, atol=1e-6):
    """Five-number summary and mean of each column of an ``n x K`` simplex matrix."""
    w = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    if np.any(w < -atol) or np.any(np.abs(w.sum(axis=1) - 1.0) > atol):
        raise IntegrityError("attention rows are not on the probability simplex")
    names = list(names) if names is not None else [f"w{c}" for c in range(w.shape[1])]
    if len(names) != w.shape[1]:
        raise DimensionError("one name per column required")
    q = np.quantile(w, [0.0, 0.25, 0.5, 0.75, 1.0], axis=0)
    mean = w.mean(axis=0)
    return [
        dict(name=name, **dict(zip(STAT_COLUMNS, [*q[:, c].tolist(), float(mean[c])])))
        for c, name in enumerate(names)
    ]


def format_statistics(rows):
    lines = ["\t".join(("name",) + STAT_COLUMNS)]
    for r in rows:
        lines.append("\t".join([r["name"]] + [repr(float(r[k])) for k in STAT_COLUMNS]))
    return "\n".join(lines) + "\n"


def parse_statistics(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0].split("\t")
    if tuple(header) != ("name",) + STAT_COLUMNS:
        raise IntegrityError(f"unexpected header {header}")
    rows = []
    for ln in lines[1:]:
        parts = ln.split("\t")
        rows.append(dict(name=parts[0], **{k: float(v) for k, v in zip(STAT_COLUMNS, parts[1:])}))
    return rows
