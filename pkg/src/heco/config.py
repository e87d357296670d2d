"""Run configuration."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .contrast import LossConfig
from .errors import ConfigError
from .negatives import GanSchedule, MixupConfig

VARIANTS = ("heco", "hecopp", "heco_sc", "heco_mp", "heco_mu", "heco_gan", "hecopp_semi")


@dataclass
class RunConfig:
    variant: str = "heco"
    seed: int = 0
    dim: int = 64
    lr: float = 1e-3
    epochs: int = 200
    patience: int = 50
    feat_drop: float = 0.0
    attn_drop: float = 0.0
    tau: float = 0.7
    tau_sc: float = 0.7
    tau_mp: float = 0.7
    lam: float = 0.5
    lambda1: float = 0.0
    lambda2: float = 0.0
    aleph: float = 0.0
    semi_labels: int = 20
    t_pos: int = 5
    sample_sizes: dict[str, int] = field(default_factory=dict)
    sample_modes: dict[str, str] = field(default_factory=dict)
    default_sample_size: int = 7
    proj_layers: int = 1
    embed_view: str = "mp"
    mixup: MixupConfig = field(default_factory=MixupConfig)
    gan: GanSchedule = field(default_factory=GanSchedule)

    def __post_init__(self):
        if isinstance(self.mixup, dict):
            self.mixup = MixupConfig(**self.mixup)
        if isinstance(self.gan, dict):
            self.gan = GanSchedule(**self.gan)
        self.validate()

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if not 1e-4 <= self.lr <= 5e-3:
            raise ConfigError(f"lr {self.lr} outside [1e-4, 5e-3]")
        if not 5 <= self.patience <= 50:
            raise ConfigError(f"patience {self.patience} outside [5, 50]")
        for name in ("feat_drop", "attn_drop"):
            v = getattr(self, name)
            if not 0.0 <= v <= 0.5:
                raise ConfigError(f"{name} {v} outside [0, 0.5]")
        for name in ("lambda1", "lambda2"):
            v = getattr(self, name)
            if v != 0.0 and not 1e-9 <= v <= 1e2:
                raise ConfigError(f"{name} {v} must be 0 or within [1e-9, 1e2]")
        if self.dim < 1 or self.epochs < 1 or self.t_pos < 1 or self.proj_layers < 1:
            raise ConfigError("dim, epochs, t_pos and proj_layers must be >= 1")
        if self.embed_view not in ("mp", "sc", "concat"):
            raise ConfigError(f"embed_view must be mp, sc or concat, not {self.embed_view!r}")
        self.loss_config()

    def loss_config(self) -> LossConfig:
        return LossConfig(self.tau, self.tau_sc, self.tau_mp, self.lam, self.lambda1, self.lambda2, self.aleph)

    def sample_size(self, node_type: str) -> int:
        return self.sample_sizes.get(node_type, self.default_sample_size)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes) -> "RunConfig":
        return RunConfig.from_dict({**self.to_dict(), **changes})
