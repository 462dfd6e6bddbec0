import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from mlsgnn.attention import (
    ChannelAttentionParams,
    FusionPattern,
    GraphAttentionParams,
    aggregate_backward,
    aggregate_embeddings,
    aggregate_forward,
    attention_statistics,
    format_statistics,
    fuse_backward,
    fuse_measure_graphs,
    fuse_measure_values,
    parse_statistics,
    softmax,
)
from mlsgnn.errors import DimensionError, IntegrityError


def sym_binary(rng, n, p=0.4):
    a = np.triu(rng.random((n, n)) < p, 1).astype(float)
    return sp.csr_matrix(a + a.T)


def fusion_oracle(mats, params):
    # dense transcription of the fusion equations
    logits = np.stack([params.vector @ np.tanh(params.weight @ a.T + params.bias) for a in mats])
    w = np.exp(logits - logits.max(0))
    w /= w.sum(0)
    raw = sum(np.diag(w[q]) @ a for q, a in enumerate(mats))
    return (raw + raw.T) / 2, w


def test_identical_subgraphs_fuse_to_themselves():
    rng = np.random.default_rng(0)
    b = sym_binary(rng, 7)
    params = GraphAttentionParams.init(rng, 7, hidden=5)
    a, w = fuse_measure_graphs([b, b, b], params)
    np.testing.assert_allclose(a.toarray(), b.toarray(), atol=1e-15)
    np.testing.assert_allclose(w.sum(axis=0), 1.0, atol=1e-12)


def test_single_subgraph_weights_all_one():
    rng = np.random.default_rng(1)
    b = sym_binary(rng, 6)
    a, w = fuse_measure_graphs([b], GraphAttentionParams.init(rng, 6, hidden=3))
    np.testing.assert_array_equal(w, np.ones((1, 6)))
    np.testing.assert_array_equal(a.toarray(), b.toarray())


def test_zero_params_give_uniform_weights():
    rng = np.random.default_rng(2)
    mats = [sym_binary(rng, 6) for _ in range(3)]
    a, w = fuse_measure_graphs(mats, GraphAttentionParams.zeros(6, hidden=4))
    np.testing.assert_allclose(w, 1 / 3, atol=1e-15)
    np.testing.assert_allclose(a.toarray(), sum(m.toarray() for m in mats) / 3, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 12), st.integers(1, 4))
def test_fusion_matches_dense_oracle(seed, n, q):
    rng = np.random.default_rng(seed)
    mats = [sym_binary(rng, n) for _ in range(q)]
    params = GraphAttentionParams.init(rng, n, hidden=4)
    params.bias[...] = rng.standard_normal(params.bias.shape)
    a, w = fuse_measure_graphs(mats, params)
    ref_a, ref_w = fusion_oracle([m.toarray() for m in mats], params)
    np.testing.assert_allclose(w, ref_w, atol=1e-12)
    np.testing.assert_allclose(a.toarray(), ref_a, atol=1e-12)
    np.testing.assert_array_equal(a.toarray(), a.toarray().T)
    assert np.all(w >= 0)
    np.testing.assert_allclose(w.sum(0), 1.0, atol=1e-12)


def test_fusion_shape_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(DimensionError):
        fuse_measure_graphs([sym_binary(rng, 4), sym_binary(rng, 5)], GraphAttentionParams.zeros(4))
    with pytest.raises(DimensionError):
        fuse_measure_graphs([sym_binary(rng, 4)], GraphAttentionParams.zeros(5))
    with pytest.raises(DimensionError):
        FusionPattern([])


def test_pattern_indexing():
    rng = np.random.default_rng(3)
    mats = [sym_binary(rng, 9) for _ in range(2)]
    pat = FusionPattern(mats)
    np.testing.assert_array_equal(pat.rows[pat.diagonal], np.arange(9))
    np.testing.assert_array_equal(pat.indices[pat.diagonal], np.arange(9))
    np.testing.assert_array_equal(pat.rows[pat.transpose], pat.indices)
    for q, m in enumerate(mats):
        dense = np.zeros((9, 9))
        dense[pat.rows[pat.positions[q]], pat.indices[pat.positions[q]]] = m.tocsr().data
        np.testing.assert_array_equal(dense, m.toarray())


def test_fusion_backward_matches_finite_differences():
    rng = np.random.default_rng(4)
    n = 6
    mats = [sym_binary(rng, n, 0.5) for _ in range(3)]
    pat = FusionPattern(mats)
    params = GraphAttentionParams.init(rng, n, hidden=3)
    g = rng.standard_normal(pat.nnz)

    def loss():
        return float(fuse_measure_values(pat, params)[0] @ g)

    _, _, cache = fuse_measure_values(pat, params)
    grads = fuse_backward(g, cache, params)
    for name in ("weight", "bias", "vector"):
        p = getattr(params, name)
        num = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + 1e-6
            fp = loss()
            p[idx] = old - 1e-6
            fm = loss()
            p[idx] = old
            num[idx] = (fp - fm) / 2e-6
        np.testing.assert_allclose(grads[name], num, atol=1e-8, rtol=1e-5)


def test_identical_embeddings_aggregate_to_themselves():
    rng = np.random.default_rng(5)
    z = rng.standard_normal((6, 4))
    z_agg, w = aggregate_embeddings([z, z, z], ChannelAttentionParams.init(rng, 4, hidden=3))
    np.testing.assert_allclose(z_agg, z, atol=1e-14)


def test_zero_channel_params_average():
    rng = np.random.default_rng(6)
    zs = [rng.standard_normal((5, 3)) for _ in range(3)]
    z_agg, w = aggregate_embeddings(zs, ChannelAttentionParams.zeros(3, hidden=2))
    np.testing.assert_allclose(w, 1 / 3, atol=1e-15)
    np.testing.assert_allclose(z_agg, sum(zs) / 3, atol=1e-14)


def test_aggregation_oracle_and_convex_hull():
    rng = np.random.default_rng(7)
    zs = [rng.standard_normal((4, 3)) for _ in range(3)]
    params = ChannelAttentionParams.init(rng, 3, hidden=5)
    params.bias[:] = rng.standard_normal(5)
    z_agg, w = aggregate_embeddings(zs, params)
    logits = np.stack([[params.vector @ np.tanh(params.weight @ z[i] + params.bias) for z in zs]
                       for i in range(4)])
    ref = np.exp(logits) / np.exp(logits).sum(1, keepdims=True)
    np.testing.assert_allclose(w, ref, atol=1e-12)
    np.testing.assert_allclose(w.sum(1), 1.0, atol=1e-6)
    for i in range(4):
        lo = np.min([z[i] for z in zs], axis=0)
        hi = np.max([z[i] for z in zs], axis=0)
        assert np.all(z_agg[i] >= lo - 1e-12) and np.all(z_agg[i] <= hi + 1e-12)


def test_aggregation_shape_errors():
    with pytest.raises(DimensionError):
        aggregate_embeddings([np.ones((3, 2)), np.ones((3, 3))], ChannelAttentionParams.zeros(2))
    with pytest.raises(DimensionError):
        aggregate_embeddings([np.ones((3, 2))] * 3, ChannelAttentionParams.zeros(4))


def test_aggregation_backward_matches_finite_differences():
    rng = np.random.default_rng(8)
    zs = [rng.standard_normal((5, 3)) for _ in range(3)]
    params = ChannelAttentionParams.init(rng, 3, hidden=4)
    g = rng.standard_normal((5, 3))

    def loss():
        return float((aggregate_forward(zs, params)[0] * g).sum())

    _, _, cache = aggregate_forward(zs, params)
    gz, gp = aggregate_backward(g, cache, params)
    targets = [(getattr(params, k), gp[k]) for k in ("weight", "bias", "vector")]
    targets += list(zip(zs, gz))
    for p, analytic in targets:
        num = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + 1e-6
            fp = loss()
            p[idx] = old - 1e-6
            fm = loss()
            p[idx] = old
            num[idx] = (fp - fm) / 2e-6
        np.testing.assert_allclose(analytic, num, atol=1e-8, rtol=1e-5)


def test_softmax_shift_invariance():
    rng = np.random.default_rng(9)
    logits = rng.standard_normal((3, 8))
    shifted = logits + rng.standard_normal(8) * 50
    np.testing.assert_allclose(softmax(shifted, 0), softmax(logits, 0), atol=1e-12)


def test_statistics_examples():
    rows = attention_statistics(np.full((10, 3), 1 / 3), ["fea", "sem", "ori"])
    for r in rows:
        for k in ("min", "q1", "median", "q3", "max", "mean"):
            assert r[k] == pytest.approx(1 / 3)
    half = np.array([[0.0, 1.0]] * 3 + [[1.0, 0.0]] * 3)
    r0 = attention_statistics(half)[0]
    assert (r0["min"], r0["median"], r0["max"]) == (0.0, 0.5, 1.0)
    single = attention_statistics(np.array([[0.2, 0.3, 0.5]]))
    for r, v in zip(single, [0.2, 0.3, 0.5]):
        assert {r[k] for k in ("min", "q1", "median", "q3", "max", "mean")} == {v}


def test_statistics_order_statistics_oracle():
    w = np.random.default_rng(0).dirichlet(np.ones(3), size=37)
    rows = attention_statistics(w)
    for c, r in enumerate(rows):
        col = np.sort(w[:, c])
        assert r["min"] == col[0] and r["max"] == col[-1]
        assert r["median"] == pytest.approx(col[18])
        assert r["q1"] == pytest.approx(col[9])
        assert r["q3"] == pytest.approx(col[27])


def test_statistics_rejects_off_simplex_rows():
    with pytest.raises(IntegrityError):
        attention_statistics(np.array([[0.5, 0.6]]))
    with pytest.raises(IntegrityError):
        attention_statistics(np.array([[1.5, -0.5]]))
    with pytest.raises(DimensionError):
        attention_statistics(np.array([[0.5, 0.5]]), ["only"])


def test_statistics_table_roundtrip():
    w = np.random.default_rng(1).dirichlet(np.ones(3), size=20)
    rows = attention_statistics(w, ["fea", "sem", "ori"])
    text = format_statistics(rows)
    assert text.splitlines()[0] == "name\tmin\tq1\tmedian\tq3\tmax\tmean"
    assert parse_statistics(text) == rows
