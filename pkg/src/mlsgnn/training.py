"""Joint objective, full-model forward/backward, Adam and the training loop."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, fields

import numpy as np
import scipy.sparse as sp

from .attention import (
    ChannelAttentionParams,
    FusionPattern,
    GraphAttentionParams,
    aggregate_backward,
    aggregate_forward,
    fuse_backward,
    fuse_measure_values,
    softmax,
)
from .errors import DimensionError, DomainError, NumericError, StateError
from .gnn import GcnChannel, gcn_channel_backward, gcn_channel_forward, glorot
from .graph import SparseGraph, normalize_adjacency
from .measures import MeasureSubgraph
from .semantic import PpmiGraph

FEA, SEM, ORI = "fea", "sem", "ori"
CHANNELS = (FEA, SEM, ORI)
_PROB_FLOOR = 1e-12


@dataclass
class TrainConfig:
    lr: float = 5e-4
    weight_decay: float = 5e-4
    alpha: float = 1.0
    beta: float = 1.0
    nhid1: int = 768
    nhid2: int = 128
    dropout: float = 0.5
    max_epochs: int = 500
    patience: int = 100
    seed: int = 0
    l21_epsilon: float = 1e-8
    attention_hidden: int = 64
    channels: tuple = CHANNELS
    activate_output: bool = False
    regularizers: bool = True

    def __post_init__(self):
        self.channels = tuple(self.channels)
        if not self.lr > 0:
            raise DomainError("lr must be positive")
        if self.weight_decay < 0 or self.alpha < 0 or self.beta < 0:
            raise DomainError("weight_decay, alpha and beta must be nonnegative")
        if not 0 <= self.dropout < 1:
            raise DomainError("dropout must lie in [0, 1)")
        if self.patience > self.max_epochs and self.max_epochs > 0:
            raise DomainError("patience must not exceed max_epochs")
        if not self.channels or any(c not in CHANNELS for c in self.channels):
            raise DomainError(f"channels must be a non-empty subset of {CHANNELS}")
        if len(set(self.channels)) != len(self.channels):
            raise DomainError("duplicate channel")
        # canonical aggregation order
        self.channels = tuple(c for c in CHANNELS if c in self.channels)

    def replace(self, **changes):
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return TrainConfig(**values)


@dataclass
class LossTerms:
    L0: float
    L_reg_a: float
    L_reg_b: float
    total: float


def _as_csr(obj):
    if isinstance(obj, MeasureSubgraph):
        obj = obj.adjacency
    if isinstance(obj, SparseGraph):
        obj = obj.adjacency
    return sp.csr_matrix(obj, dtype=np.float64, copy=True)


@dataclass
class ModelGraphs:
    """Precomputed propagation inputs: measure subgraphs, ``Ã_ori`` and ``P̃``."""

    subgraphs: list
    topology: sp.csr_matrix
    semantic: sp.csr_matrix
    pattern: FusionPattern = field(init=False)

    def __post_init__(self):
        self.pattern = FusionPattern(self.subgraphs)
        self.topology = sp.csr_matrix(self.topology, dtype=np.float64)
        self.semantic = sp.csr_matrix(self.semantic, dtype=np.float64)

    @classmethod
    def from_parts(cls, subgraphs, topology_graph, semantic):
        """Normalizes the topology; ``semantic`` may be a ``PpmiGraph`` or ``P̃`` itself."""
        subs = [_as_csr(s) for s in subgraphs]
        if isinstance(semantic, PpmiGraph):
            semantic = semantic.P_norm
        return cls(subs, normalize_adjacency(topology_graph).values, _as_csr(semantic))

    @property
    def n(self):
        return self.pattern.n


@dataclass
class ModelParams:
    channels: dict
    graph_attention: GraphAttentionParams | None
    channel_attention: ChannelAttentionParams | None
    classifier_weight: np.ndarray
    classifier_bias: np.ndarray
    version: int = 0

    def parameters(self):
        """Ordered ``name -> array`` view of every trainable block."""
        out = {}
        for name, ch in self.channels.items():
            for i, w in enumerate(ch.weights):
                out[f"{name}.W{i + 1}"] = w
        if self.graph_attention is not None:
            for k in ("weight", "bias", "vector"):
                out[f"graph_att.{k}"] = getattr(self.graph_attention, k)
        if self.channel_attention is not None:
            for k in ("weight", "bias", "vector"):
                out[f"channel_att.{k}"] = getattr(self.channel_attention, k)
        out["classifier.weight"] = self.classifier_weight
        out["classifier.bias"] = self.classifier_bias
        return out

    def copy(self):
        return copy.deepcopy(self)


def is_weight(name):
    return not name.endswith("bias")


def init_model(n, d, n_classes, config, rng=None):
    rng = np.random.default_rng(config.seed) if rng is None else rng
    chans = {}
    for c in config.channels:
        chans[c] = GcnChannel.init(rng, [d, config.nhid1, config.nhid2], config.dropout,
                                   config.activate_output, name=c)
    gatt = GraphAttentionParams.init(rng, n, config.attention_hidden) if FEA in config.channels else None
    catt = (ChannelAttentionParams.init(rng, config.nhid2, config.attention_hidden)
            if len(config.channels) > 1 else None)
    return ModelParams(chans, gatt, catt, glorot(rng, config.nhid2, n_classes), np.zeros(n_classes))


def l21_distance(z1, z2, epsilon=0.0):
    """Smoothed row-wise l2,1 distance ``sum_i sqrt(|z1_i - z2_i|^2 + eps) - n sqrt(eps)``."""
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    if z1.shape != z2.shape:
        raise DimensionError(f"shape mismatch {z1.shape} vs {z2.shape}")
    sq = ((z1 - z2) ** 2).sum(axis=1)
    return float(np.sqrt(sq + epsilon).sum() - z1.shape[0] * np.sqrt(epsilon))


def l21_gradient(z1, z2, epsilon):
    """Gradient of the smoothed distance with respect to ``z1``."""
    diff = z1 - z2
    return diff / np.sqrt((diff * diff).sum(axis=1, keepdims=True) + epsilon)


def cross_entropy(predictions, labels, nodes=None):
    """Mean of ``-ln p(true class)`` with probabilities floored at 1e-12."""
    p = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels)
    if nodes is not None:
        p = p[nodes]
        labels = labels[nodes]
    if p.shape[0] == 0:
        raise DomainError("cross entropy over an empty node set")
    if np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-6):
        raise DomainError("prediction rows must sum to 1")
    true = p[np.arange(p.shape[0]), labels]
    return float(-np.log(np.maximum(true, _PROB_FLOOR)).mean())


def evaluate_accuracy(predictions, labels, nodes):
    nodes = np.asarray(nodes)
    if nodes.size == 0:
        return float("nan")
    pred = np.argmax(np.asarray(predictions)[nodes], axis=1)
    return float((pred == np.asarray(labels)[nodes]).mean())


@dataclass
class ForwardResult:
    loss: LossTerms
    objective: float  # smoothed-l21 objective that the gradients differentiate
    predictions: np.ndarray
    embeddings: dict
    graph_weights: np.ndarray | None
    channel_weights: np.ndarray
    cache: dict
    version: int


def forward_full(model, dataset, graphs, config, training=False, rng=None):
    chans = config.channels
    x = dataset.features
    cache = {"channels": {}, "props": {}}
    graph_weights = None
    emb = {}
    for c in chans:
        if c == FEA:
            pattern = graphs.pattern
            values, graph_weights, fcache = fuse_measure_values(pattern, model.graph_attention)
            b = values.copy()
            b[pattern.diagonal] += 1.0
            deg = np.bincount(pattern.rows, weights=b, minlength=pattern.n)
            s = 1.0 / np.sqrt(deg)
            norm_vals = (s[pattern.rows] * s[pattern.indices]) * b
            prop = pattern.matrix(norm_vals)
            cache["fusion"] = fcache
            cache["norm"] = (b, deg, s, norm_vals)
        elif c == ORI:
            prop = graphs.topology
        else:
            prop = graphs.semantic
        cache["props"][c] = prop
        z, ccache = gcn_channel_forward(model.channels[c], prop, x, training, rng)
        emb[c] = z
        cache["channels"][c] = ccache
    if len(chans) > 1:
        z_agg, channel_weights, acache = aggregate_forward([emb[c] for c in chans],
                                                           model.channel_attention)
        cache["aggregation"] = acache
    else:
        z_agg = emb[chans[0]]
        channel_weights = np.ones((z_agg.shape[0], 1))
    emb["agg"] = z_agg
    logits = z_agg @ model.classifier_weight + model.classifier_bias
    probs = softmax(logits, axis=1)
    l0 = cross_entropy(probs, dataset.labels, dataset.train)
    la = lb = 0.0
    objective = l0
    eps = config.l21_epsilon
    if config.regularizers:
        if FEA in chans and ORI in chans:
            la = l21_distance(emb[FEA], emb[ORI])
            objective += config.alpha * l21_distance(emb[FEA], emb[ORI], eps)
        if SEM in chans and ORI in chans:
            lb = l21_distance(emb[SEM], emb[ORI])
            objective += config.beta * l21_distance(emb[SEM], emb[ORI], eps)
    total = l0 + config.alpha * la + config.beta * lb
    if not np.isfinite(total):
        raise NumericError("non-finite loss")
    return ForwardResult(LossTerms(l0, la, lb, total), objective, probs, emb, graph_weights,
                         channel_weights, cache, model.version)


def weight_penalty(model, config):
    return 0.5 * config.weight_decay * sum(
        float((w * w).sum()) for k, w in model.parameters().items() if is_weight(k)
    )


def _normalization_backward(pattern, grad_norm, b, deg, s, norm_vals):
    """dL/dB on the pattern for ``Ã = D^-1/2 B D^-1/2`` with ``D = rowsum(B)``."""
    ga = grad_norm * norm_vals
    g_deg = -(np.bincount(pattern.rows, weights=ga, minlength=pattern.n)
              + np.bincount(pattern.indices, weights=ga, minlength=pattern.n)) / (2.0 * deg)
    return grad_norm * (s[pattern.rows] * s[pattern.indices]) + g_deg[pattern.rows]


def backward_full(model, result, dataset, graphs, config):
    """Gradients of the (smoothed) objective plus ``weight_decay * W`` on weights."""
    if result.version != model.version:
        raise StateError("forward cache is stale; parameters changed since the forward pass")
    chans = config.channels
    cache = result.cache
    train = dataset.train
    n, n_classes = result.predictions.shape
    g_logits = np.zeros((n, n_classes))
    g_logits[train] = result.predictions[train]
    g_logits[train, dataset.labels[train]] -= 1.0
    g_logits /= train.size
    emb = result.embeddings
    grads = {
        "classifier.weight": emb["agg"].T @ g_logits,
        "classifier.bias": g_logits.sum(axis=0),
    }
    g_agg = g_logits @ model.classifier_weight.T
    if len(chans) > 1:
        gz_list, gatt = aggregate_backward(g_agg, cache["aggregation"], model.channel_attention)
        g_emb = dict(zip(chans, gz_list))
        for k, v in gatt.items():
            grads[f"channel_att.{k}"] = v
    else:
        g_emb = {chans[0]: g_agg}
    eps = config.l21_epsilon
    if config.regularizers:
        if FEA in chans and ORI in chans:
            g = config.alpha * l21_gradient(emb[FEA], emb[ORI], eps)
            g_emb[FEA] = g_emb[FEA] + g
            g_emb[ORI] = g_emb[ORI] - g
        if SEM in chans and ORI in chans:
            g = config.beta * l21_gradient(emb[SEM], emb[ORI], eps)
            g_emb[SEM] = g_emb[SEM] + g
            g_emb[ORI] = g_emb[ORI] - g
    for c in chans:
        out = gcn_channel_backward(model.channels[c], cache["props"][c], cache["channels"][c],
                                   g_emb[c], propagation_grad=(c == FEA))
        for i, gw in enumerate(out["weights"]):
            grads[f"{c}.W{i + 1}"] = gw
        if c == FEA:
            g_b = _normalization_backward(graphs.pattern, out["propagation"], *cache["norm"])
            for k, v in fuse_backward(g_b, cache["fusion"], model.graph_attention).items():
                grads[f"graph_att.{k}"] = v
    params = model.parameters()
    if config.weight_decay:
        for k in grads:
            if is_weight(k):
                grads[k] = grads[k] + config.weight_decay * params[k]
    return {k: grads[k] for k in params}


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0


def adam_init(params):
    return AdamState({k: np.zeros_like(p) for k, p in params.items()},
                     {k: np.zeros_like(p) for k, p in params.items()}, 0)


def adam_step(params, grads, state, lr, betas=(0.9, 0.999), eps=1e-8, t=None):
    """Bias-corrected Adam update applied in place; returns ``(params, state)``."""
    b1, b2 = betas
    t = state.t + 1 if t is None else t
    if t < 1:
        raise DomainError("Adam step index starts at 1")
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {k}")
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for k, p in params.items():
        g = grads[k]
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    state.t = t
    return params, state


@dataclass
class EpochRecord:
    epoch: int
    L0: float
    La: float
    Lb: float
    L: float
    train_acc: float
    val_acc: float
    test_acc: float


HISTORY_COLUMNS = ("epoch", "L0", "La", "Lb", "L", "train_acc", "val_acc", "test_acc")


def format_history(history):
    lines = ["\t".join(HISTORY_COLUMNS)]
    for r in history:
        lines.append("\t".join([str(r.epoch)] + [repr(float(getattr(r, k)))
                                                 for k in HISTORY_COLUMNS[1:]]))
    return "\n".join(lines) + "\n"


def parse_history(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if tuple(lines[0].split("\t")) != HISTORY_COLUMNS:
        raise ValueError("unexpected history header")
    out = []
    for ln in lines[1:]:
        parts = ln.split("\t")
        out.append(EpochRecord(int(parts[0]), *(float(v) for v in parts[1:])))
    return out


def train(model, dataset, graphs, config, callback=None):
    """Full-batch Adam training with early stopping on validation accuracy.

    Returns ``(best_model, history)``; ``best_model`` is a copy holding the
    parameters of the epoch with the highest validation accuracy.
    ``callback(epoch, train_result, eval_result)`` runs after every epoch.
    """
    if dataset.train.size == 0:
        raise DomainError("dataset has no training nodes")
    rng = np.random.default_rng(config.seed + 1)
    model = model.copy()
    best = model.copy()
    best_val = -np.inf
    since_best = 0
    history = []
    state = adam_init(model.parameters())
    for epoch in range(1, config.max_epochs + 1):
        try:
            res = forward_full(model, dataset, graphs, config, training=True, rng=rng)
        except NumericError as exc:
            raise NumericError(f"diverged at epoch {epoch}: {exc}", epoch=epoch) from exc
        grads = backward_full(model, res, dataset, graphs, config)
        try:
            adam_step(model.parameters(), grads, state, config.lr)
        except NumericError as exc:
            raise NumericError(f"diverged at epoch {epoch}: {exc}", epoch=epoch) from exc
        model.version += 1
        ev = forward_full(model, dataset, graphs, config, training=False)
        probs = ev.predictions
        rec = EpochRecord(
            epoch, res.loss.L0, res.loss.L_reg_a, res.loss.L_reg_b, res.loss.total,
            evaluate_accuracy(probs, dataset.labels, dataset.train),
            evaluate_accuracy(probs, dataset.labels, dataset.val),
            evaluate_accuracy(probs, dataset.labels, dataset.test),
        )
        history.append(rec)
        if callback is not None:
            callback(epoch, res, ev)
        val = rec.val_acc if dataset.val.size else rec.train_acc
        if val > best_val:
            best_val = val
            best = model.copy()
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    return best, history


@dataclass
class GradCheckReport:
    errors: dict  # block name -> max relative error
    tolerance: float
    restarts: int = 0

    @property
    def max_error(self):
        return max(self.errors.values()) if self.errors else 0.0

    @property
    def passed(self):
        return self.max_error < self.tolerance

    def sorted(self):
        return sorted(self.errors.items(), key=lambda kv: kv[1], reverse=True)


def relative_errors(analytic, numeric, floor=1e-7):
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def _min_preactivation(model, dataset, graphs, config):
    res = forward_full(model, dataset, graphs, config, training=False)
    worst = np.inf
    for c, cc in res.cache["channels"].items():
        ch = model.channels[c]
        # rows with an empty propagation row are constant zero, not a kink
        live = np.diff(sp.csr_matrix(res.cache["props"][c]).indptr) > 0
        for li, y in enumerate(cc.preacts):
            if (li < ch.n_layers - 1 or ch.activate_output) and live.any():
                worst = min(worst, float(np.abs(y[live]).min()))
    return worst


def gradient_check(model, dataset, graphs, config, tolerance=1e-3, step=1e-5,
                   analytic=None, blocks=None, kink_margin=1e-3, max_restarts=10):
    """Compare analytic gradients with central differences, per parameter block.

    Runs with dropout disabled. If some ReLU pre-activation sits within
    ``kink_margin`` of zero the parameters are redrawn (up to ``max_restarts``
    times) so the check happens at a smooth point. ``analytic`` overrides the
    analytic gradients, which lets tests inject faults.
    """
    config = config.replace(dropout=0.0)
    model = model.copy()
    for ch in model.channels.values():
        ch.dropout = 0.0
    restarts = 0
    if analytic is None:
        seed = config.seed
        while _min_preactivation(model, dataset, graphs, config) < kink_margin and restarts < max_restarts:
            restarts += 1
            seed += 1000
            fresh = init_model(dataset.n, dataset.d, dataset.n_classes, config.replace(seed=seed))
            for k, v in fresh.parameters().items():
                model.parameters()[k][...] = v
        res = forward_full(model, dataset, graphs, config)
        analytic = backward_full(model, res, dataset, graphs, config)

    def objective():
        r = forward_full(model, dataset, graphs, config)
        return r.objective + weight_penalty(model, config)

    params = model.parameters()
    errors = {}
    for name, p in params.items():
        if blocks is not None and name not in blocks:
            continue
        num = np.zeros_like(p)
        flat = p.reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + step
            fp = objective()
            flat[i] = old - step
            fm = objective()
            flat[i] = old
            nflat[i] = (fp - fm) / (2.0 * step)
        errors[name] = float(relative_errors(analytic[name], num).max())
    return GradCheckReport(errors, tolerance, restarts)
