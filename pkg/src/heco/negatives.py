"""Harder negatives: mixing of the hardest ones, and a GAN that synthesises them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .hin import PosNegSets
from .tensor import Tensor


# -- mixing ----------------------------------------------------------------


@dataclass(frozen=True)
class MixupConfig:
    k: int = 10

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"mixup k must be >= 1, got {self.k}")


@dataclass
class Mixtures:
    """``vectors[i, r] = alpha[i, r] * cand[first[i, r]] + (1 - alpha[i, r]) * cand[second[i, r]]``."""

    vectors: np.ndarray  # (n, k, d)
    first: np.ndarray  # (n, k) candidate ids
    second: np.ndarray
    alpha: np.ndarray
    hardest: np.ndarray  # (n, k) ids of the top-k hardest negatives, hardest first


def _unit(x: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.where(norm > 0, norm, 1.0)


def mix_hard_negatives(
    anchors: np.ndarray,
    candidates: np.ndarray,
    neg_mask: np.ndarray,
    cfg: MixupConfig,
    rng: np.random.Generator,
) -> Mixtures:
    """Synthesise k negatives per anchor by convex mixing of its k hardest ones.

    Hardness is cosine similarity to the anchor. Each mixture picks two
    distinct members of the top-k and a weight from Uniform(0, 1). With k = 1
    no distinct pair exists and the single hardest negative is duplicated.
    """
    k = cfg.k
    n_neg = neg_mask.sum(axis=1)
    if k > n_neg.min():
        raise ConfigError(f"mixup k={k} exceeds the smallest negative set ({int(n_neg.min())})")
    sims = _unit(anchors) @ _unit(candidates).T
    sims = np.where(neg_mask, sims, -np.inf)
    # stable sort keeps ascending id among equal similarities
    hardest = np.argsort(-sims, axis=1, kind="stable")[:, :k]
    n = len(anchors)
    if k == 1:
        first = second = hardest[:, :1].copy()
        alpha = np.ones((n, 1))
    else:
        u = rng.integers(0, k, size=(n, k))
        v = (u + rng.integers(1, k, size=(n, k))) % k
        rows = np.arange(n)[:, None]
        first, second = hardest[rows, u], hardest[rows, v]
        alpha = rng.random((n, k))
    vectors = alpha[..., None] * candidates[first] + (1.0 - alpha[..., None]) * candidates[second]
    return Mixtures(vectors, first, second, alpha, hardest)


def mixup_hard_negatives(
    anchor: np.ndarray, negatives: np.ndarray, cfg: MixupConfig, rng: np.random.Generator
) -> Mixtures:
    """Single-anchor form: ``negatives`` are that anchor's negative set only."""
    mask = np.ones((1, len(negatives)), dtype=bool)
    return mix_hard_negatives(anchor.reshape(1, -1), negatives, mask, cfg, rng)


# -- GAN -------------------------------------------------------------------


@dataclass(frozen=True)
class GanSchedule:
    k0: int = 50
    k_d: int = 20
    k_g: int = 20
    i_dg: int = 2
    k_h: int = 50
    max_rounds: int = 3
    patience: int = 20
    sigma2: float = 0.01
    max_fakes: int = 4
    lr: float = 1e-3

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ConfigError("sigma2 must be >= 0")
        for name in ("k0", "k_d", "k_g", "k_h", "max_rounds", "max_fakes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.i_dg < 0:
            raise ConfigError("i_dg must be >= 0")


@dataclass
class GanParams:
    """Bilinear discriminators, projecting generators and the shared generator MLP.

    ``D_mp`` scores meta-path-view candidates given a schema-view anchor;
    ``D_sc`` the converse. ``G_mp`` maps a schema-view anchor to the centre of
    its fake meta-path-view samples; ``G_sc`` the converse.
    """

    D_mp: Tensor
    D_sc: Tensor
    G_mp: Tensor
    G_sc: Tensor
    W: Tensor
    b: Tensor

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator):
        g = lambda name: T.glorot_init(dim, dim, rng, name=name)  # noqa: E731
        return cls(g("D_mp"), g("D_sc"), g("G_mp"), g("G_sc"), g("G_W"), T.zeros(1, dim, name="G_b"))

    def discriminator(self) -> list[Tensor]:
        return [self.D_mp, self.D_sc]

    def generator(self) -> list[Tensor]:
        return [self.G_mp, self.G_sc, self.W, self.b]

    def named(self) -> dict[str, Tensor]:
        return {
            "gan.D_mp": self.D_mp, "gan.D_sc": self.D_sc, "gan.G_mp": self.G_mp,
            "gan.G_sc": self.G_sc, "gan.W": self.W, "gan.b": self.b,
        }


def discriminator_score(z_anchor: np.ndarray, z_candidate: np.ndarray, M: np.ndarray) -> float:
    """Probability that the candidate is a real positive of the anchor."""
    x = float(np.asarray(z_anchor).ravel() @ np.asarray(M) @ np.asarray(z_candidate).ravel())
    return float(np.exp(-np.logaddexp(0.0, -x)))


def generate_fake(
    z_anchor: Tensor, M: Tensor, W: Tensor, b: Tensor, sigma2: float, rng: np.random.Generator,
    linear: bool = False,
) -> Tensor:
    """``ELU((z M + noise) W + b)`` with ``noise ~ N(0, sigma2 I)``, one row per anchor row."""
    centre = z_anchor @ M
    noise = np.sqrt(sigma2) * rng.standard_normal(centre.shape) if sigma2 > 0 else np.zeros(centre.shape)
    out = (centre + Tensor(noise)) @ W + b
    return out if linear else T.elu(out)


@dataclass
class PositiveDraw:
    """Up to R positives per anchor drawn from its positive set minus itself."""

    index: np.ndarray  # (n, R)
    mask: np.ndarray  # (n, R) bool

    @property
    def counts(self) -> np.ndarray:
        return self.mask.sum(axis=1)

    @property
    def active(self) -> np.ndarray:
        return self.counts > 0


def draw_positive_subsets(pos: PosNegSets, max_fakes: int, rng: np.random.Generator) -> PositiveDraw:
    n = pos.num_nodes
    index = np.zeros((n, max_fakes), dtype=np.int64)
    mask = np.zeros((n, max_fakes), dtype=bool)
    for i, p in enumerate(pos.positives):
        others = p[p != i]
        m = min(len(others), max_fakes)
        if m:
            index[i, :m] = rng.choice(others, m, replace=False)
            mask[i, :m] = True
    return PositiveDraw(index, mask)


def _pair_scores(q: Tensor, rep: np.ndarray, cand: Tensor, width: int) -> Tensor:
    """Row-wise dot products ``q[rep[k]] . cand[k]`` reshaped to (n, width)."""
    n = len(rep) // width
    return T.reshape(T.sum_(T.mul(T.gather_rows(q, rep), cand), axis=1), (n, width))


def _masked_row_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    m = mask.astype(np.float64)
    cnt = np.maximum(m.sum(axis=1, keepdims=True), 1.0)
    return T.sum_(T.mul(x, Tensor(m / cnt)), axis=1)


@dataclass
class Fakes:
    """Generated negatives per anchor: ``mp[r]`` row i is the r-th fake for schema anchor i."""

    mp: list[Tensor]
    sc: list[Tensor]
    mask: np.ndarray  # (n, R)


def generate_fakes(
    z_sc: Tensor, z_mp: Tensor, gan: GanParams, mask: np.ndarray, sigma2: float, rng: np.random.Generator
) -> Fakes:
    width = mask.shape[1]
    mp = [generate_fake(z_sc, gan.G_mp, gan.W, gan.b, sigma2, rng) for _ in range(width)]
    sc = [generate_fake(z_mp, gan.G_sc, gan.W, gan.b, sigma2, rng) for _ in range(width)]
    return Fakes(mp, sc, mask)


def _stack(rows: list[Tensor]) -> Tensor:
    """Interleave R (n, d) tensors into (n * R, d) with anchor-major order."""
    n, d = rows[0].shape
    return T.reshape(T.concat_cols(*rows), (n * len(rows), d))


def discriminator_loss(
    z_sc: Tensor, z_mp: Tensor, gan: GanParams, draw: PositiveDraw, fakes: Fakes
) -> tuple[Tensor, dict[str, float]]:
    """Mean over active anchors of ``(L_D^sc + L_D^mp) / 2``."""
    n, width = draw.index.shape
    rep = np.repeat(np.arange(n), width)
    flat = draw.index.ravel()
    active = draw.active.astype(np.float64).reshape(n, 1)
    n_active = max(active.sum(), 1.0)
    terms = []
    d_fake = []
    for anchor, cand, M, fk in ((z_sc, z_mp, gan.D_mp, fakes.mp), (z_mp, z_sc, gan.D_sc, fakes.sc)):
        q = anchor @ M
        real = _pair_scores(q, rep, T.gather_rows(cand, flat), width)
        fake = _pair_scores(q, rep, _stack(fk), width)
        loss = T.scale(_masked_row_mean(T.log_sigmoid(real), draw.mask)
                       + _masked_row_mean(T.log_sigmoid(T.scale(fake, -1.0)), draw.mask), -1.0)
        terms.append(loss)
        d_fake.append(_mean_prob(fake.data, draw.mask))
    per_anchor = T.scale(terms[0] + terms[1], 0.5)
    total = T.scale(T.sum_(T.mul(per_anchor, Tensor(active))), 1.0 / n_active)
    return total, {"D_fake": float(np.mean(d_fake))}


def generator_loss(z_sc: Tensor, z_mp: Tensor, gan: GanParams, mask: np.ndarray, fakes: Fakes):
    n, width = mask.shape
    rep = np.repeat(np.arange(n), width)
    active = mask.any(axis=1).astype(np.float64).reshape(n, 1)
    n_active = max(active.sum(), 1.0)
    terms = []
    d_fake = []
    for anchor, M, fk in ((z_sc, gan.D_mp, fakes.mp), (z_mp, gan.D_sc, fakes.sc)):
        fake = _pair_scores(anchor @ M, rep, _stack(fk), width)
        terms.append(T.scale(_masked_row_mean(T.log_sigmoid(fake), mask), -1.0))
        d_fake.append(_mean_prob(fake.data, mask))
    per_anchor = T.scale(terms[0] + terms[1], 0.5)
    total = T.scale(T.sum_(T.mul(per_anchor, Tensor(active))), 1.0 / n_active)
    return total, {"D_fake": float(np.mean(d_fake))}


def _mean_prob(logits: np.ndarray, mask: np.ndarray) -> float:
    if not mask.any():
        return float("nan")
    return float(np.exp(-np.logaddexp(0.0, -logits[mask])).mean())


def frozen(params: GanParams, part: str) -> GanParams:
    """Copy of ``params`` with the discriminator or generator detached."""
    if part == "D":
        return GanParams(params.D_mp.detach(), params.D_sc.detach(), params.G_mp, params.G_sc, params.W, params.b)
    if part == "G":
        return GanParams(params.D_mp, params.D_sc, params.G_mp.detach(), params.G_sc.detach(),
                         params.W.detach(), params.b.detach())
    raise ValueError(part)
