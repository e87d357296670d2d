"""Projection heads and multi-positive InfoNCE objectives."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, DataError
from .tensor import Tensor


@dataclass
class ProjectionHead:
    """MLP ``W_L ELU(... ELU(z W_1 + b_1) ...) + b_L`` over embeddings of width d."""

    layers: list[tuple[Tensor, Tensor]]

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator, hidden_layers: int = 1, tag: str = "head"):
        layers = []
        for k in range(hidden_layers + 1):
            layers.append((T.glorot_init(dim, dim, rng, name=f"{tag}.W{k}"), T.zeros(1, dim, name=f"{tag}.b{k}")))
        return cls(layers)

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        for k, (W, b) in enumerate(self.layers):
            out[f"{prefix}.W{k}"] = W
            out[f"{prefix}.b{k}"] = b
        return out


def project(z: Tensor, head: ProjectionHead) -> Tensor:
    if z.shape[1] != head.layers[0][0].shape[0]:
        raise ContractError(f"projection expects width {head.layers[0][0].shape[0]}, got {z.shape[1]}")
    out = z
    for k, (W, b) in enumerate(head.layers):
        out = out @ W + b
        if k < len(head.layers) - 1:
            out = T.elu(out)
    return out


@dataclass
class ProjectionHeads:
    cross: ProjectionHead
    intra_sc: ProjectionHead | None = None
    intra_mp: ProjectionHead | None = None

    def named(self) -> dict[str, Tensor]:
        out = self.cross.named("head.cross")
        if self.intra_sc is not None:
            out.update(self.intra_sc.named("head.intra_sc"))
        if self.intra_mp is not None:
            out.update(self.intra_mp.named("head.intra_mp"))
        return out


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.7
    tau_sc: float = 0.7
    tau_mp: float = 0.7
    lam: float = 0.5
    lambda1: float = 0.0
    lambda2: float = 0.0
    aleph: float = 0.0

    def __post_init__(self):
        for name in ("tau", "tau_sc", "tau_mp"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lam must lie in [0, 1], got {self.lam}")
        for name in ("lambda1", "lambda2", "aleph"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")


def cosine_logits(anchors: Tensor, candidates: Tensor, tau: float) -> Tensor:
    a = T.row_l2_normalize(anchors)
    c = T.row_l2_normalize(candidates)
    return T.scale(a @ T.transpose(c), 1.0 / tau)


def _warn_zero_rows(*xs: Tensor) -> None:
    for x in xs:
        if np.any(~x.data.any(axis=1)):
            warnings.warn("zero embedding row; its cosine similarity is taken as 0", RuntimeWarning, stacklevel=3)
            return


def info_nce(
    anchors: Tensor,
    candidates: Tensor,
    pos_mask: np.ndarray,
    tau: float,
    extra: list[Tensor] | None = None,
    extra_mask: np.ndarray | None = None,
) -> Tensor:
    """Per-anchor loss ``-log(sum_pos exp(s/tau) / sum_all exp(s/tau))`` as (n, 1).

    ``pos_mask[i, k]`` marks candidate k as a positive of anchor i; every
    other candidate is a negative. ``extra`` holds additional negative
    vectors, one (n, d) tensor per slot, paired row-wise with the anchors;
    ``extra_mask`` (n, slots) switches individual slots off.
    """
    if tau <= 0:
        raise ConfigError(f"temperature must be > 0, got {tau}")
    if anchors.shape[1] != candidates.shape[1]:
        raise ContractError(f"anchor width {anchors.shape[1]} vs candidate width {candidates.shape[1]}")
    _warn_zero_rows(anchors, candidates)
    e = T.exp(cosine_logits(anchors, candidates, tau))
    num = T.sum_(T.mul(e, Tensor(pos_mask.astype(np.float64))), axis=1)
    den = T.sum_(e, axis=1)
    if extra:
        a = T.row_l2_normalize(anchors)
        cols = [T.sum_(T.mul(a, T.row_l2_normalize(x)), axis=1) for x in extra]
        ex = T.exp(T.scale(T.concat_cols(*cols), 1.0 / tau))
        if extra_mask is not None:
            ex = T.mul(ex, Tensor(extra_mask.astype(np.float64)))
        den = den + T.sum_(ex, axis=1)
    return T.log(den) - T.log(num)


@dataclass
class ObjectiveParts:
    """Per-node loss vectors of one forward pass, kept for logging."""

    total: Tensor
    cross_sc: Tensor | None = None
    cross_mp: Tensor | None = None
    intra_sc: Tensor | None = None
    intra_mp: Tensor | None = None
    semi: Tensor | None = None

    def scalars(self) -> dict[str, float]:
        def val(t):
            return float("nan") if t is None else float(t.data.mean())

        return {
            "L_cross_sc": val(self.cross_sc),
            "L_cross_mp": val(self.cross_mp),
            "L_intra_sc": val(self.intra_sc),
            "L_intra_mp": val(self.intra_mp),
            "L_semi": val(self.semi),
            "total": self.total.item(),
        }


def cross_view_loss(
    p_sc: Tensor,
    p_mp: Tensor,
    pos_mask: np.ndarray,
    cfg: LossConfig,
    extra_sc: tuple[list[Tensor], np.ndarray] | None = None,
    extra_mp: tuple[list[Tensor], np.ndarray] | None = None,
) -> ObjectiveParts:
    """``mean_i[lam * L_sc_i + (1 - lam) * L_mp_i]`` on projected embeddings.

    ``extra_sc`` are additional negatives for schema-view anchors (they live
    in the meta-path candidate space), ``extra_mp`` the converse.
    """
    l_sc = info_nce(p_sc, p_mp, pos_mask, cfg.tau, *(extra_sc or (None, None)))
    l_mp = info_nce(p_mp, p_sc, pos_mask, cfg.tau, *(extra_mp or (None, None)))
    total = T.mean(T.scale(l_sc, cfg.lam) + T.scale(l_mp, 1.0 - cfg.lam))
    return ObjectiveParts(total, cross_sc=l_sc, cross_mp=l_mp)


def heco_objective(
    z_sc: Tensor,
    z_mp: Tensor,
    heads: ProjectionHeads,
    pos_mask: np.ndarray,
    cfg: LossConfig,
    extra_sc: tuple[list[Tensor], np.ndarray] | None = None,
    extra_mp: tuple[list[Tensor], np.ndarray] | None = None,
) -> ObjectiveParts:
    """Cross-view loss with both views passed through the shared cross head."""
    p_sc = project(z_sc, heads.cross)
    p_mp = project(z_mp, heads.cross)
    return cross_view_loss(p_sc, p_mp, pos_mask, cfg, extra_sc, extra_mp)


def single_view_objective(z: Tensor, heads: ProjectionHeads, pos_mask: np.ndarray, tau: float) -> Tensor:
    """Per-node loss of a one-view variant: anchors and candidates from the same view."""
    p = project(z, heads.cross)
    return info_nce(p, p, pos_mask, tau)


def intra_view_losses(z_sc: Tensor, z_mp: Tensor, heads: ProjectionHeads, pos_mask: np.ndarray, cfg: LossConfig):
    q_sc = project(z_sc, heads.intra_sc)
    q_mp = project(z_mp, heads.intra_mp)
    return info_nce(q_sc, q_sc, pos_mask, cfg.tau_sc), info_nce(q_mp, q_mp, pos_mask, cfg.tau_mp)


def hecopp_objective(
    z_sc: Tensor,
    z_mp: Tensor,
    heads: ProjectionHeads,
    pos_mask: np.ndarray,
    cfg: LossConfig,
    **extra,
) -> ObjectiveParts:
    if heads.intra_sc is None or heads.intra_mp is None:
        raise ContractError("HeCo++ needs both intra-view heads")
    parts = heco_objective(z_sc, z_mp, heads, pos_mask, cfg, **extra)
    parts.intra_sc, parts.intra_mp = intra_view_losses(z_sc, z_mp, heads, pos_mask, cfg)
    intra = T.mean(T.scale(parts.intra_sc, cfg.lambda1) + T.scale(parts.intra_mp, cfg.lambda2))
    parts.total = parts.total + intra
    return parts


@dataclass
class Classifier:
    W: Tensor
    b: Tensor

    @classmethod
    def init(cls, dim: int, n_classes: int, rng: np.random.Generator):
        return cls(T.glorot_init(dim, n_classes, rng, name="semi.W"), T.zeros(1, n_classes, name="semi.b"))

    def named(self) -> dict[str, Tensor]:
        return {"semi.W": self.W, "semi.b": self.b}


def cross_entropy(z: Tensor, labels: np.ndarray, clf: Classifier) -> Tensor:
    """Mean cross-entropy of ``softmax(z W + b)`` against integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = clf.W.shape[1]
    if labels.size == 0:
        raise DataError("no labelled nodes for the supervised term")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise DataError(f"label out of range [0, {n_classes})")
    onehot = np.zeros((len(labels), n_classes))
    onehot[np.arange(len(labels)), labels] = 1.0
    logp = T.row_log_softmax(z @ clf.W + clf.b)
    return T.scale(T.mean(T.sum_(T.mul(logp, Tensor(onehot)), axis=1)), -1.0)


def semi_objective(
    parts: ObjectiveParts,
    z_mp: Tensor,
    labelled: np.ndarray,
    labels: np.ndarray,
    clf: Classifier,
    cfg: LossConfig,
) -> ObjectiveParts:
    """Add ``aleph * cross_entropy`` on the labelled target nodes."""
    semi = cross_entropy(T.gather_rows(z_mp, labelled), labels, clf)
    parts.semi = semi
    parts.total = parts.total + T.scale(semi, cfg.aleph)
    return parts
