"""Training loops: plain contrastive training and the GAN-augmented schedule."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import negatives as N
from .model import HeCo, stream
from .tensor import Adam, Tape

log = logging.getLogger(__name__)

LOSS_COLUMNS = ("epoch", "L_cross_sc", "L_cross_mp", "L_intra_sc", "L_intra_mp", "L_semi", "total")
GAN_COLUMNS = ("phase", "epoch", "L_D", "L_G", "L_heco", "D_fake")


@dataclass
class TrainResult:
    loss_log: list[dict] = field(default_factory=list)
    attention_log: list[tuple[int, str, str, float]] = field(default_factory=list)
    gan_log: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0

    @property
    def losses(self) -> list[float]:
        return [row["total"] for row in self.loss_log]


class Trainer:
    """Owns the optimiser and RNG streams so phases can be interleaved."""

    def __init__(self, model: HeCo):
        self.model = model
        cfg = model.config
        self.params = list(model.trainable().values())
        self.opt = Adam(self.params, lr=cfg.lr)
        self.sample_rng = stream(cfg.seed, "sample")
        self.drop_rng = stream(cfg.seed, "dropout")
        self.mix_rng = stream(cfg.seed, "mixup")
        self.result = TrainResult()
        self.epoch = 0
        self._best = math.inf
        self._best_state: list[np.ndarray] | None = None
        self._stale = 0

    def step(self, fake_fn=None) -> dict:
        """One full-batch epoch; ``fake_fn(emb)`` may supply generated negatives."""
        m = self.model
        sampled = m.sample(self.sample_rng)
        with Tape() as tape:
            emb = m.forward(sampled, self.drop_rng)
            fakes = fake_fn(emb) if fake_fn is not None else None
            parts = m.objective(emb, self.mix_rng, fakes)
        grads = tape.gradient(parts.total, self.params)
        self.opt.step(grads)
        row = {"epoch": self.epoch, **parts.scalars()}
        if fakes is not None:
            row["plain"] = m.objective(emb).total.item()
        self.result.loss_log.append(row)
        for name, b in emb.beta_type.items():
            self.result.attention_log.append((self.epoch, "type", name, b))
        for name, b in emb.beta_metapath.items():
            self.result.attention_log.append((self.epoch, "metapath", name, b))
        self.epoch += 1
        self.result.epochs_run = self.epoch
        return row

    def track(self, value: float) -> bool:
        """Record a monitored loss; True once ``patience`` epochs pass without improvement."""
        if value < self._best:
            self._best = value
            self._stale = 0
            self._best_state = [p.data.copy() for p in self.params]
            self.result.best_epoch = self.epoch - 1
        else:
            self._stale += 1
        return self._stale >= self.model.config.patience

    def restore_best(self) -> None:
        if self._best_state is not None:
            for p, d in zip(self.params, self._best_state):
                p.data = d.copy()


def train(model: HeCo, epochs: int | None = None, early_stop: bool = True) -> TrainResult:
    if model.config.variant == "heco_gan":
        return train_heco_gan(model)
    trainer = Trainer(model)
    for _ in range(epochs or model.config.epochs):
        row = trainer.step()
        if trainer.track(row["total"]) and early_stop:
            log.info("early stop at epoch %d (best %d)", trainer.epoch - 1, trainer.result.best_epoch)
            break
    if early_stop:
        trainer.restore_best()
    return trainer.result


# -- GAN phases --------------------------------------------------------------


@dataclass
class PhaseStep:
    loss: float
    d_fake: float
    grads: dict[str, np.ndarray]


def gan_train_D(z_sc, z_mp, model: HeCo, opt: Adam, rng: np.random.Generator) -> PhaseStep:
    """One discriminator epoch with the generator frozen."""
    gan, sched = model.gan, model.config.gan
    draw = N.draw_positive_subsets(model.pos, sched.max_fakes, rng)
    with Tape() as tape:
        fakes = N.generate_fakes(z_sc, z_mp, N.frozen(gan, "G"), draw.mask, sched.sigma2, rng)
        loss, info = N.discriminator_loss(z_sc, z_mp, gan, draw, fakes)
    names = gan.named()
    grads = dict(zip(names, tape.gradient(loss, list(names.values()))))
    opt.step([grads["gan.D_mp"], grads["gan.D_sc"]])
    return PhaseStep(loss.item(), info["D_fake"], grads)


def gan_train_G(z_sc, z_mp, model: HeCo, opt: Adam, rng: np.random.Generator) -> PhaseStep:
    """One generator epoch with the discriminator frozen."""
    gan, sched = model.gan, model.config.gan
    draw = N.draw_positive_subsets(model.pos, sched.max_fakes, rng)
    with Tape() as tape:
        fakes = N.generate_fakes(z_sc, z_mp, gan, draw.mask, sched.sigma2, rng)
        loss, info = N.generator_loss(z_sc, z_mp, N.frozen(gan, "D"), draw.mask, fakes)
    names = gan.named()
    grads = dict(zip(names, tape.gradient(loss, list(names.values()))))
    opt.step([grads[k] for k in ("gan.G_mp", "gan.G_sc", "gan.W", "gan.b")])
    return PhaseStep(loss.item(), info["D_fake"], grads)


def train_heco_gan(model: HeCo) -> TrainResult:
    """HeCo warm-up, then rounds of {D/G alternation, HeCo with generated negatives}.

    Rounds stop after ``max_rounds`` or once the plain cross-view loss has
    not improved for ``patience`` HeCo epochs.
    """
    sched = model.config.gan
    gan = model.gan
    trainer = Trainer(model)
    res = trainer.result
    opt_d = Adam(gan.discriminator(), lr=sched.lr)
    opt_g = Adam(gan.generator(), lr=sched.lr)
    draw_rng = stream(model.config.seed, "gan_draw")
    noise_rng = stream(model.config.seed, "gan_noise")
    embed_rng = stream(model.config.seed, "gan_sample")
    best, stale = math.inf, 0
    nan = float("nan")

    def monitor(value: float) -> None:
        nonlocal best, stale
        if value < best:
            best, stale = value, 0
        else:
            stale += 1

    for _ in range(sched.k0):
        row = trainer.step()
        monitor(row["total"])
        res.gan_log.append({"phase": "heco", "epoch": row["epoch"], "L_D": nan, "L_G": nan,
                            "L_heco": row["total"], "D_fake": nan})

    gan_epoch = 0
    for _ in range(sched.max_rounds):
        fake_fn = None
        if sched.i_dg > 0:
            emb = model.embed_views(embed_rng)
            z_sc, z_mp = emb.z_sc.detach(), emb.z_mp.detach()
            for _ in range(sched.i_dg):
                for _ in range(sched.k_d):
                    s = gan_train_D(z_sc, z_mp, model, opt_d, draw_rng)
                    res.gan_log.append({"phase": "D", "epoch": gan_epoch, "L_D": s.loss, "L_G": nan,
                                        "L_heco": nan, "D_fake": s.d_fake})
                    gan_epoch += 1
                for _ in range(sched.k_g):
                    s = gan_train_G(z_sc, z_mp, model, opt_g, draw_rng)
                    res.gan_log.append({"phase": "G", "epoch": gan_epoch, "L_D": nan, "L_G": s.loss,
                                        "L_heco": nan, "D_fake": s.d_fake})
                    gan_epoch += 1

            def fake_fn(emb):
                draw = N.draw_positive_subsets(model.pos, sched.max_fakes, draw_rng)
                return N.generate_fakes(emb.z_sc.detach(), emb.z_mp.detach(), N.frozen(N.frozen(gan, "D"), "G"),
                                        draw.mask, sched.sigma2, noise_rng)

        for _ in range(sched.k_h):
            row = trainer.step(fake_fn)
            monitor(row.get("plain", row["total"]))
            res.gan_log.append({"phase": "heco_aug" if fake_fn else "heco", "epoch": row["epoch"],
                                "L_D": nan, "L_G": nan, "L_heco": row["total"], "D_fake": nan})
        if stale >= sched.patience:
            log.info("GAN schedule converged after epoch %d", trainer.epoch - 1)
            break
    return res
