import numpy as np
import pytest
import scipy.sparse as sp

from heco import tensor as T
from heco.encoders import (
    EncoderInputs,
    encode,
    init_encoder_params,
    metapath_gcn,
    node_level_attention,
    semantic_attention,
    transform_features,
    type_level_attention,
)
from heco.errors import ContractError
from heco.hin import SampledNeighbors, SchemaSampleConfig, metapath_adjacencies, sample_schema_neighbors
from heco.io import SynthSpec, generate_synthetic_hin, load_dataset, toy_acm_path
from heco.tensor import Tape, Tensor

from oracles import central_difference, relative_error


def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0)))


def leaky(x):
    return np.where(x > 0, x, 0.2 * x)


@pytest.fixture(scope="module")
def small():
    spec = SynthSpec(targets_per_class=10, aux_types={"author": 12, "subject": 6}, p_in=0.3, p_out=0.05)
    g = generate_synthetic_hin(spec, 3).graph
    adjs = metapath_adjacencies(g)
    return g, adjs, EncoderInputs.from_graph(g, adjs)


def test_node_attention_matches_loop():
    rng = np.random.default_rng(0)
    n, m, d, width = 5, 7, 4, 3
    ht, hn, a = rng.standard_normal((n, d)), rng.standard_normal((m, d)), rng.standard_normal((2 * d, 1))
    index = rng.integers(0, m, (n, width))
    mask = np.ones((n, width), dtype=bool)
    mask[4] = False
    out = node_level_attention(Tensor(ht), Tensor(hn), SampledNeighbors(index, mask), Tensor(a)).data
    for i in range(4):
        s = np.array([leaky(np.concatenate([ht[i], hn[j]]) @ a[:, 0]) for j in index[i]])
        w = np.exp(s - s.max()) / np.exp(s - s.max()).sum()
        np.testing.assert_allclose(out[i], elu((w[:, None] * hn[index[i]]).sum(axis=0)), atol=1e-12)
    np.testing.assert_array_equal(out[4], 0.0)


def test_level_attention_matches_formula():
    rng = np.random.default_rng(1)
    n, d = 6, 3
    parts = [rng.standard_normal((n, d)) for _ in range(2)]
    W, b, a = rng.standard_normal((d, d)), rng.standard_normal((1, d)), rng.standard_normal((d, 1))
    from heco.encoders import AttentionParams

    att = AttentionParams(Tensor(W), Tensor(b), Tensor(a))
    z, beta = semantic_attention([Tensor(p) for p in parts], att)
    w = np.array([np.mean(np.tanh(p @ W + b) @ a) for p in parts])
    want_beta = np.exp(w) / np.exp(w).sum()
    np.testing.assert_allclose(beta, want_beta, atol=1e-12)
    np.testing.assert_allclose(z.data, want_beta[0] * parts[0] + want_beta[1] * parts[1], atol=1e-12)
    assert beta.sum() == pytest.approx(1.0, abs=1e-12)


def test_type_attention_renormalises_missing_types():
    rng = np.random.default_rng(2)
    from heco.encoders import AttentionParams

    d = 3
    att = AttentionParams(Tensor(rng.standard_normal((d, d))), Tensor(np.zeros((1, d))), Tensor(rng.standard_normal((d, 1))))
    parts = [Tensor(rng.standard_normal((4, d))) for _ in range(2)]
    present = np.array([[True, True], [True, False], [False, True], [False, False]])
    z, beta = type_level_attention(parts, att, present)
    np.testing.assert_allclose(z.data[1], parts[0].data[1], atol=1e-12)
    np.testing.assert_allclose(z.data[2], parts[1].data[2], atol=1e-12)
    np.testing.assert_array_equal(z.data[3], 0.0)


def test_onehot_shortcut_equals_identity_features(small):
    g, adjs, inputs = small
    params = init_encoder_params(g, 8, np.random.default_rng(0))
    dense = dict(inputs.features)
    for t, x in inputs.features.items():
        if isinstance(x, int):
            dense[t] = Tensor(np.eye(x))
    a = transform_features(inputs.features, params)
    b = transform_features(dense, params)
    for t in a:
        np.testing.assert_allclose(a[t].data, b[t].data, atol=1e-14)


def test_transform_dimension_check(small):
    g, adjs, inputs = small
    params = init_encoder_params(g, 8, np.random.default_rng(0))
    bad = dict(inputs.features)
    bad[g.target] = Tensor(np.ones((g.num_targets, 2)))
    with pytest.raises(ContractError):
        transform_features(bad, params)


def test_gcn_matches_formula(small):
    g, adjs, inputs = small
    h = np.random.default_rng(4).standard_normal((g.num_targets, 5))
    adj = adjs[0]
    out = metapath_gcn(Tensor(h), adj.gcn_matrix()).data
    deg = adj.degrees + 1.0
    for i in range(g.num_targets):
        want = h[i] / deg[i] + sum(h[j] / np.sqrt(deg[i] * deg[j]) for j in adj.neighbors[i])
        np.testing.assert_allclose(out[i], want, atol=1e-12)


def test_encode_shapes_and_betas(small):
    g, adjs, inputs = small
    params = init_encoder_params(g, 16, np.random.default_rng(0))
    sampled = sample_schema_neighbors(g.schema_neighbors(), SchemaSampleConfig({"author": 4, "subject": 2}),
                                      np.random.default_rng(1))
    emb = encode(inputs, params, sampled)
    assert emb.z_sc.shape == emb.z_mp.shape == (g.num_targets, 16)
    assert sum(emb.beta_type.values()) == pytest.approx(1.0, abs=1e-12)
    assert set(emb.beta_metapath) == {"PAP", "PSP"}


def test_encode_requires_samples_for_schema_view(small):
    g, adjs, inputs = small
    params = init_encoder_params(g, 4, np.random.default_rng(0))
    with pytest.raises(ContractError):
        encode(inputs, params, None)
    assert encode(inputs, params, None, views=("mp",)).z_sc is None


def test_view_mask_schema_embedding_ignores_own_features(small):
    g, adjs, inputs = small
    params = init_encoder_params(g, 8, np.random.default_rng(0))
    for a in params.node_att.values():
        a.data[:] = 0.0
    sampled = sample_schema_neighbors(g.schema_neighbors(), SchemaSampleConfig({"author": 4, "subject": 2}),
                                      np.random.default_rng(1))
    base = encode(inputs, params, sampled).z_sc.data
    feats = dict(inputs.features)
    x = feats[g.target].data.copy()
    x[3] += 10.0
    feats[g.target] = Tensor(x)
    moved = encode(EncoderInputs(inputs.target, feats, inputs.gcn), params, sampled).z_sc.data
    assert np.max(np.abs(moved[3] - base[3])) <= 1e-12


def test_dropout_draws_only_with_rng(small):
    g, adjs, inputs = small
    params = init_encoder_params(g, 8, np.random.default_rng(0), feat_drop=0.3, attn_drop=0.3)
    sampled = sample_schema_neighbors(g.schema_neighbors(), SchemaSampleConfig({"author": 4, "subject": 2}),
                                      np.random.default_rng(1))
    a = encode(inputs, params, sampled).z_mp.data
    b = encode(inputs, params, sampled).z_mp.data
    c = encode(inputs, params, sampled, np.random.default_rng(5)).z_mp.data
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_encoder_gradients(small):
    g, adjs, inputs = small
    params = init_encoder_params(g, 6, np.random.default_rng(0))
    sampled = sample_schema_neighbors(g.schema_neighbors(), SchemaSampleConfig({"author": 3, "subject": 2}),
                                      np.random.default_rng(1))
    named = params.named()

    def loss():
        emb = encode(inputs, params, sampled)
        return T.sum_(T.tanh(emb.z_sc) * emb.z_mp)

    with Tape() as tape:
        l = loss()
    grads = dict(zip(named, tape.gradient(l, list(named.values()))))
    rng = np.random.default_rng(9)
    for name, p in named.items():
        coords = [tuple(rng.integers(0, s) for s in p.shape) for _ in range(3)]
        fd = central_difference(lambda: loss().item(), p.data, coords=coords)
        an = np.array([grads[name][c] for c in coords])
        assert np.max(relative_error(an, fd, 1e-6)) < 1e-5, name
