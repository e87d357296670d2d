"""Model assembly for every training variant."""

from __future__ import annotations

import numpy as np

from . import contrast as C
from .config import RunConfig
from .encoders import EncoderInputs, ViewEmbeddings, encode, init_encoder_params
from .errors import DataError
from .hin import (
    HeteroGraph,
    SchemaSampleConfig,
    build_positive_negative_sets,
    metapath_adjacencies,
    sample_schema_neighbors,
)
from .negatives import Fakes, GanParams, mix_hard_negatives
from .tensor import Tensor

# Each random consumer owns a stream derived from (seed, id); adding a
# component (an intra head, a GAN) never shifts the draws of the others.
STREAMS = {
    "encoder": 0, "cross": 1, "intra_sc": 2, "intra_mp": 3, "gan": 4, "semi": 5,
    "sample": 10, "dropout": 11, "mixup": 12, "gan_noise": 13, "gan_draw": 14,
    "gan_sample": 15, "eval": 16,
}


def stream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([seed, STREAMS[name]])


class HeCo:
    def __init__(self, graph: HeteroGraph, config: RunConfig, labelled: np.ndarray | None = None):
        self.graph = graph
        self.config = config
        seed = config.seed
        self.adjacencies = metapath_adjacencies(graph)
        self.pos = build_positive_negative_sets(self.adjacencies, config.t_pos)
        self.pos_mask = self.pos.pos_mask()
        self.inputs = EncoderInputs.from_graph(graph, self.adjacencies)
        self.schema = graph.schema_neighbors()
        self.sample_cfg = SchemaSampleConfig(
            {t: config.sample_size(t) for t in self.schema},
            {t: m for t, m in config.sample_modes.items() if t in self.schema},
        )
        self.loss_cfg = config.loss_config()
        self.encoder = init_encoder_params(
            graph, config.dim, stream(seed, "encoder"), config.feat_drop, config.attn_drop
        )
        self.heads = C.ProjectionHeads(C.ProjectionHead.init(config.dim, stream(seed, "cross"), config.proj_layers))
        if self.intra:
            self.heads.intra_sc = C.ProjectionHead.init(config.dim, stream(seed, "intra_sc"), config.proj_layers)
            self.heads.intra_mp = C.ProjectionHead.init(config.dim, stream(seed, "intra_mp"), config.proj_layers)
        self.gan = GanParams.init(config.dim, stream(seed, "gan")) if config.variant == "heco_gan" else None
        self.classifier = None
        self.labelled = None
        if config.variant == "hecopp_semi":
            if graph.labels is None or labelled is None or len(labelled) == 0:
                raise DataError("hecopp_semi needs labels and a non-empty labelled node set")
            self.labelled = np.asarray(labelled, dtype=np.int64)
            self.classifier = C.Classifier.init(config.dim, graph.num_classes, stream(seed, "semi"))

    @property
    def intra(self) -> bool:
        return self.config.variant in ("hecopp", "hecopp_semi")

    @property
    def views(self) -> tuple[str, ...]:
        if self.config.variant == "heco_sc":
            return ("sc",)
        if self.config.variant == "heco_mp":
            return ("mp",)
        return ("sc", "mp")

    def trainable(self) -> dict[str, Tensor]:
        """Parameters updated by the contrastive optimiser (GAN parts excluded)."""
        out = dict(self.encoder.named())
        out.update(self.heads.named())
        if self.classifier is not None:
            out.update(self.classifier.named())
        return out

    def named_parameters(self) -> dict[str, Tensor]:
        out = self.trainable()
        if self.gan is not None:
            out.update(self.gan.named())
        return out

    def sample(self, rng: np.random.Generator):
        if "sc" not in self.views:
            return None
        return sample_schema_neighbors(self.schema, self.sample_cfg, rng)

    def forward(self, sampled, drop_rng: np.random.Generator | None) -> ViewEmbeddings:
        return encode(self.inputs, self.encoder, sampled, drop_rng, self.views)

    def objective(
        self,
        emb: ViewEmbeddings,
        mix_rng: np.random.Generator | None = None,
        fakes: Fakes | None = None,
    ) -> C.ObjectiveParts:
        cfg, pos = self.loss_cfg, self.pos_mask
        v = self.config.variant
        if v == "heco_sc":
            l = C.single_view_objective(emb.z_sc, self.heads, pos, cfg.tau)
            return C.ObjectiveParts(C.T.mean(l), cross_sc=l)
        if v == "heco_mp":
            l = C.single_view_objective(emb.z_mp, self.heads, pos, cfg.tau)
            return C.ObjectiveParts(C.T.mean(l), cross_mp=l)
        p_sc = C.project(emb.z_sc, self.heads.cross)
        p_mp = C.project(emb.z_mp, self.heads.cross)
        extra_sc = extra_mp = None
        if v == "heco_mu":
            neg = ~pos
            rng = mix_rng or stream(self.config.seed, "mixup")
            m_sc = mix_hard_negatives(p_sc.data, p_mp.data, neg, self.config.mixup, rng)
            m_mp = mix_hard_negatives(p_mp.data, p_sc.data, neg, self.config.mixup, rng)
            extra_sc = ([Tensor(m_sc.vectors[:, r]) for r in range(m_sc.vectors.shape[1])], None)
            extra_mp = ([Tensor(m_mp.vectors[:, r]) for r in range(m_mp.vectors.shape[1])], None)
        elif fakes is not None:
            extra_sc = ([C.project(f, self.heads.cross) for f in fakes.mp], fakes.mask)
            extra_mp = ([C.project(f, self.heads.cross) for f in fakes.sc], fakes.mask)
        parts = C.cross_view_loss(p_sc, p_mp, pos, cfg, extra_sc, extra_mp)
        if self.intra:
            parts.intra_sc, parts.intra_mp = C.intra_view_losses(emb.z_sc, emb.z_mp, self.heads, pos, cfg)
            intra = C.T.mean(C.T.scale(parts.intra_sc, cfg.lambda1) + C.T.scale(parts.intra_mp, cfg.lambda2))
            parts.total = parts.total + intra
        if self.classifier is not None:
            labels = self.graph.labels[self.labelled]
            parts = C.semi_objective(parts, emb.z_mp, self.labelled, labels, self.classifier, cfg)
        return parts

    def embed_views(self, rng: np.random.Generator | None = None) -> ViewEmbeddings:
        """Deterministic pass without dropout; schema-view sampling uses ``rng``."""
        rng = rng or stream(self.config.seed, "eval")
        return self.forward(self.sample(rng), None)

    def embeddings(self, view: str | None = None) -> np.ndarray:
        view = view or self.config.embed_view
        if self.config.variant == "heco_sc":
            view = "sc"
        elif self.config.variant == "heco_mp":
            view = "mp"
        emb = self.embed_views()
        if view == "mp":
            return emb.z_mp.data.copy()
        if view == "sc":
            return emb.z_sc.data.copy()
        return np.hstack([emb.z_mp.data, emb.z_sc.data])
