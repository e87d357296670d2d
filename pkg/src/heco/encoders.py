"""Network-schema and meta-path view encoders.

Row-vector convention throughout: a feature matrix ``X`` (nodes x features)
is transformed as ``X @ W + b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import tensor as T
from .errors import ContractError
from .hin import HeteroGraph, MetaPathAdjacency, SampledNeighbors
from .tensor import Tensor


@dataclass
class AttentionParams:
    W: Tensor
    b: Tensor
    a: Tensor


@dataclass
class EncoderParams:
    dim: int
    transform: dict[str, tuple[Tensor, Tensor]]
    node_att: dict[str, Tensor]
    type_att: AttentionParams
    sem_att: AttentionParams
    feat_drop: float = 0.0
    attn_drop: float = 0.0

    def named(self) -> dict[str, Tensor]:
        out = {}
        for t, (W, b) in self.transform.items():
            out[f"enc.transform.{t}.W"] = W
            out[f"enc.transform.{t}.b"] = b
        for t, a in self.node_att.items():
            out[f"enc.node_att.{t}"] = a
        for tag, att in (("type_att", self.type_att), ("sem_att", self.sem_att)):
            out[f"enc.{tag}.W"] = att.W
            out[f"enc.{tag}.b"] = att.b
            out[f"enc.{tag}.a"] = att.a
        return out


def init_encoder_params(
    g: HeteroGraph, dim: int, rng: np.random.Generator, feat_drop: float = 0.0, attn_drop: float = 0.0
) -> EncoderParams:
    transform = {}
    for t in g.node_types:
        transform[t] = (
            T.glorot_init(g.features[t].shape[1], dim, rng, name=f"W_{t}"),
            T.zeros(1, dim, name=f"b_{t}"),
        )
    node_att = {t: T.glorot_init(2 * dim, 1, rng, name=f"a_{t}") for t in g.neighbor_types()}

    def att(tag):
        return AttentionParams(
            T.glorot_init(dim, dim, rng, name=f"W_{tag}"),
            T.zeros(1, dim, name=f"b_{tag}"),
            T.glorot_init(dim, 1, rng, name=f"a_{tag}"),
        )

    return EncoderParams(dim, transform, node_att, att("sc"), att("mp"), feat_drop, attn_drop)


@dataclass
class ViewEmbeddings:
    z_sc: Tensor | None
    z_mp: Tensor | None
    beta_type: dict[str, float] = field(default_factory=dict)
    beta_metapath: dict[str, float] = field(default_factory=dict)


@dataclass
class EncoderInputs:
    """Everything about the graph an encoder pass needs, precomputed once."""

    target: str
    features: dict[str, Tensor | int]  # an int n stands for an n x n one-hot identity
    gcn: list[tuple[str, sp.csr_matrix]]

    @classmethod
    def from_graph(cls, g: HeteroGraph, adjacencies: list[MetaPathAdjacency]) -> "EncoderInputs":
        feats: dict[str, Tensor | int] = {}
        for t in g.node_types:
            if g.feature_kinds.get(t) == "onehot":
                feats[t] = g.num_nodes[t]
            else:
                feats[t] = Tensor(np.asarray(g.features[t], dtype=np.float64))
        return cls(g.target, feats, [(a.name, a.gcn_matrix()) for a in adjacencies])

    def feature_shape(self, t: str) -> tuple[int, int]:
        x = self.features[t]
        return (x, x) if isinstance(x, int) else x.shape


def transform_features(
    features: dict[str, Tensor | int],
    params: EncoderParams,
    drop_masks: dict[str, np.ndarray] | None = None,
) -> dict[str, Tensor]:
    """ELU(x W + b) per node type.

    One-hot types (given as an int count) use the rows of W directly; their
    dropout mask has shape (n, 1) and scales whole rows.
    """
    out = {}
    for t, x in features.items():
        W, b = params.transform[t]
        mask = drop_masks.get(t) if drop_masks else None
        if isinstance(x, int):
            if x != W.shape[0]:
                raise ContractError(f"type {t}: {x} one-hot nodes but W is {W.shape}")
            xw = W if mask is None else T.mul(W, Tensor(mask.reshape(-1, 1)))
        else:
            if x.shape[1] != W.shape[0]:
                raise ContractError(f"type {t}: feature dim {x.shape[1]} but W is {W.shape}")
            if mask is not None:
                x = T.dropout(x, mask)
            xw = x @ W
        out[t] = T.elu(xw + b)
    return out


def node_level_attention(
    h_target: Tensor,
    h_neighbors: Tensor,
    sampled: SampledNeighbors,
    a: Tensor,
    attn_mask: np.ndarray | None = None,
) -> Tensor:
    """Fuse sampled neighbors of one type into one vector per target node.

    The target's own vector only enters the attention scores; the weighted
    sum runs over neighbors alone. Rows without neighbors come out as zero.
    """
    n, width = sampled.index.shape
    d = h_target.shape[1]
    hn = T.gather_rows(h_neighbors, sampled.index.ravel())
    hi = T.gather_rows(h_target, np.repeat(np.arange(n), width))
    scores = T.leaky_relu(T.concat_cols(hi, hn) @ a)
    alpha = T.row_softmax(T.reshape(scores, (n, width)), mask=sampled.mask)
    if attn_mask is not None:
        alpha = T.dropout(alpha, attn_mask)
    weighted = T.reshape(T.mul(T.reshape(alpha, (n * width, 1)), hn), (n, width * d))
    return T.elu(weighted @ Tensor(_block_sum(width, d)))


def _block_sum(width: int, d: int) -> np.ndarray:
    return np.tile(np.eye(d), (width, 1))


def _level_attention(
    parts: list[Tensor], att: AttentionParams, present: np.ndarray | None = None
) -> tuple[Tensor, np.ndarray]:
    """Shared form of type-level and semantic-level attention.

    ``present`` (nodes x parts, bool) marks which parts exist per node; the
    global weight of a part averages over the nodes that have it, and fused
    weights are renormalised per node over its present parts.
    """
    if not parts:
        raise ContractError("attention needs at least one input embedding")
    n = parts[0].shape[0]
    ws = []
    for k, h in enumerate(parts):
        s = T.tanh(h @ att.W + att.b) @ att.a
        if present is None:
            ws.append(T.mean(s))
        else:
            col = present[:, k].astype(np.float64).reshape(1, n)
            cnt = max(col.sum(), 1.0)
            ws.append(T.scale(Tensor(col) @ s, 1.0 / cnt))
    beta = T.row_softmax(T.concat_cols(*ws))
    if present is None:
        z = None
        for k, h in enumerate(parts):
            term = T.mul(h, T.matmul(beta, Tensor(_unit_col(len(parts), k))))
            z = term if z is None else z + term
        return z, beta.data.ravel().copy()
    pm = present.astype(np.float64)
    weights = T.mul(Tensor(pm), beta)
    denom = weights @ Tensor(np.ones((len(parts), 1)))
    denom = denom + Tensor((~present.any(axis=1)).astype(np.float64).reshape(n, 1))
    weights = T.div(weights, denom)
    z = None
    for k, h in enumerate(parts):
        term = T.mul(h, weights @ Tensor(_unit_col(len(parts), k)))
        z = term if z is None else z + term
    return z, beta.data.ravel().copy()


def _unit_col(size: int, k: int) -> np.ndarray:
    e = np.zeros((size, 1))
    e[k, 0] = 1.0
    return e


def type_level_attention(
    type_embeddings: list[Tensor], att: AttentionParams, present: np.ndarray | None = None
) -> tuple[Tensor, np.ndarray]:
    if present is not None and present.all():
        present = None
    return _level_attention(type_embeddings, att, present)


def metapath_gcn(h_target: Tensor, gcn_matrix: sp.spmatrix) -> Tensor:
    """One propagation step with the self-loop-normalised meta-path adjacency."""
    return T.spmm(gcn_matrix, h_target)


def semantic_attention(path_embeddings: list[Tensor], att: AttentionParams) -> tuple[Tensor, np.ndarray]:
    return _level_attention(path_embeddings, att)


def encode(
    inputs: EncoderInputs,
    params: EncoderParams,
    sampled: dict[str, SampledNeighbors] | None,
    rng: np.random.Generator | None = None,
    views: tuple[str, ...] = ("sc", "mp"),
) -> ViewEmbeddings:
    """Run both view encoders.

    Dropout masks are drawn from ``rng`` when it is given and the rates are
    positive; pass ``rng=None`` for a deterministic evaluation pass.
    """
    drop = None
    if rng is not None and params.feat_drop > 0:
        drop = {}
        for t, x in inputs.features.items():
            shape = (x, 1) if isinstance(x, int) else x.shape
            drop[t] = _keep_mask(shape, params.feat_drop, rng)
    h = transform_features(inputs.features, params, drop)
    h_t = h[inputs.target]
    out = ViewEmbeddings(None, None)

    if "sc" in views:
        if sampled is None:
            raise ContractError("network-schema view needs sampled neighbors")
        parts, present = [], []
        for t, a in params.node_att.items():
            s = sampled[t]
            amask = None
            if rng is not None and params.attn_drop > 0:
                amask = _keep_mask(s.index.shape, params.attn_drop, rng)
            parts.append(node_level_attention(h_t, h[t], s, a, amask))
            present.append(s.present)
        z_sc, beta = type_level_attention(parts, params.type_att, np.stack(present, axis=1))
        out.z_sc = z_sc
        out.beta_type = dict(zip(params.node_att, beta.tolist()))

    if "mp" in views:
        paths = [metapath_gcn(h_t, m) for _, m in inputs.gcn]
        z_mp, beta = semantic_attention(paths, params.sem_att)
        out.z_mp = z_mp
        out.beta_metapath = dict(zip([name for name, _ in inputs.gcn], beta.tolist()))
    return out


def _keep_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    return (rng.random(shape) >= rate) / (1.0 - rate)
