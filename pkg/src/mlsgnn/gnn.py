"""Two-layer graph convolution channel with a hand-written backward pass."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, NumericError, StateError


def glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class GcnChannel:
    """Layer weights of one convolution channel.

    Hidden layers use ReLU; the output layer is linear unless
    ``activate_output`` is set.
    """

    weights: list
    dropout: float = 0.5
    activate_output: bool = False
    name: str = "channel"

    @classmethod
    def init(cls, rng, dims, dropout=0.5, activate_output=False, name="channel"):
        weights = [glorot(rng, a, b) for a, b in zip(dims[:-1], dims[1:])]
        return cls(weights, dropout, activate_output, name)

    @property
    def n_layers(self):
        return len(self.weights)


@dataclass
class ChannelCache:
    inputs: list = field(default_factory=list)   # dropped layer inputs
    masks: list = field(default_factory=list)    # keep-mask / keep_prob or None
    products: list = field(default_factory=list)  # input @ W
    preacts: list = field(default_factory=list)  # M @ input @ W
    sparse_input: bool = False


def _dropout(x, rate, rng):
    if rate <= 0.0:
        return x, None
    keep = 1.0 - rate
    if sp.issparse(x):
        x = sp.csr_matrix(x, copy=True)
        scale = (rng.random(x.nnz) < keep) / keep
        x.data = x.data * scale
        return x, scale
    scale = (rng.random(x.shape) < keep) / keep
    return x * scale, scale


def _matmul(a, b):
    out = a @ b
    return np.asarray(out.toarray() if sp.issparse(out) else out)


def gcn_channel_forward(channel, propagation, features, training=False, rng=None):
    """Run the channel; returns ``(Z, cache)``.

    Each layer computes ``M @ drop(H) @ W``; dropout is inverted and only
    active when ``training`` is set.
    """
    h = features
    cache = ChannelCache(sparse_input=sp.issparse(features))
    n = propagation.shape[0]
    if features.shape[0] != n:
        raise DimensionError(f"{channel.name}: features have {features.shape[0]} rows, graph {n}")
    for li, w in enumerate(channel.weights):
        if h.shape[1] != w.shape[0]:
            raise DimensionError(
                f"{channel.name} layer {li + 1}: input width {h.shape[1]} != weight rows {w.shape[0]}"
            )
        if training and channel.dropout > 0:
            if rng is None:
                raise StateError("training-mode forward needs a dropout rng")
            h, mask = _dropout(h, channel.dropout, rng)
        else:
            mask = None
        # overflow is reported below as a NumericError naming the layer
        with np.errstate(over="ignore", invalid="ignore"):
            xw = _matmul(h, w)
            y = _matmul(propagation, xw)
        if not np.all(np.isfinite(y)):
            raise NumericError(f"{channel.name}: non-finite values in layer {li + 1}", layer=li + 1)
        cache.inputs.append(h)
        cache.masks.append(mask)
        cache.products.append(xw)
        cache.preacts.append(y)
        last = li == channel.n_layers - 1
        h = np.maximum(y, 0.0) if (not last or channel.activate_output) else y
    return h, cache


def sampled_products(rows, cols, left, right, chunk=8192):
    """``(left @ right.T)[rows, cols]`` without forming the dense product."""
    out = np.empty(rows.size)
    for lo in range(0, rows.size, chunk):
        hi = min(lo + chunk, rows.size)
        out[lo:hi] = np.einsum("ij,ij->i", left[rows[lo:hi]], right[cols[lo:hi]])
    return out


def gcn_channel_backward(channel, propagation, cache, grad_out,
                         input_grad=False, propagation_grad=False):
    """Gradients of a scalar loss given ``dL/dZ``.

    Returns a dict with ``weights`` (list), and optionally ``features`` (dense
    inputs only) and ``propagation`` (values aligned with the CSR structure of
    ``propagation``).
    """
    if cache is None or len(cache.preacts) != channel.n_layers:
        raise StateError(f"{channel.name}: no forward cache for backward pass")
    mt = propagation.T
    g = np.asarray(grad_out, dtype=np.float64)
    grads_w = [None] * channel.n_layers
    prop_vals = None
    if propagation_grad:
        m = sp.csr_matrix(propagation)
        m_rows = np.repeat(np.arange(m.shape[0]), np.diff(m.indptr))
        prop_vals = np.zeros(m.nnz)
    for li in reversed(range(channel.n_layers)):
        last = li == channel.n_layers - 1
        if not last or channel.activate_output:
            g = g * (cache.preacts[li] > 0)
        if propagation_grad:
            prop_vals += sampled_products(m_rows, m.indices, g, cache.products[li])
        g_xw = _matmul(mt, g)
        inp = cache.inputs[li]
        grads_w[li] = _matmul(inp.T, g_xw)
        if li == 0 and not input_grad:
            break
        g = g_xw @ channel.weights[li].T
        mask = cache.masks[li]
        if mask is not None:
            if li == 0 and cache.sparse_input:
                g = None
                break
            g = g * mask
    out = {"weights": grads_w}
    if input_grad:
        out["features"] = None if cache.sparse_input and cache.masks[0] is not None else g
    if propagation_grad:
        out["propagation"] = prop_vals
    return out
