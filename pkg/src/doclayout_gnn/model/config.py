from __future__ import annotations

from dataclasses import dataclass, fields

GEN_OBJECTIVES = ("minimax", "non_saturating")

# JSON key -> attribute name where they differ
_JSON_NAMES = {"lambda": "lam", "L": "n_layers", "N_max": "n_max"}
_ATTR_NAMES = {v: k for k, v in _JSON_NAMES.items()}
ARCHITECTURE_FIELDS = ("d_hidden", "d_latent", "n_layers", "n_max")


@dataclass
class TrainingConfig:
    beta: float = 1.0
    lam: float = 1e-4
    gamma: float = 0.1
    gen_objective: str = "non_saturating"
    d_hidden: int = 32
    d_latent: int = 8
    n_layers: int = 2
    n_max: int = 12
    epochs: int = 300
    batch_size: int = 16
    lr: float = 1e-3
    disc_lr: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        for name in ("beta", "lam", "gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"training.{_ATTR_NAMES.get(name, name)} must be >= 0")
        if self.gen_objective not in GEN_OBJECTIVES:
            raise ValueError(f"training.gen_objective must be one of {GEN_OBJECTIVES}")
        for name in ("d_hidden", "d_latent", "n_layers", "n_max", "batch_size"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"training.{_ATTR_NAMES.get(name, name)} must be >= 1")
        if self.epochs < 0:
            raise ValueError("training.epochs must be >= 0")
        if not (self.lr > 0 and self.disc_lr > 0):
            raise ValueError("training.lr and training.disc_lr must be > 0")

    @property
    def n_pairs(self):
        return self.n_max * (self.n_max - 1) // 2

    def to_dict(self):
        return {_ATTR_NAMES.get(f.name, f.name): getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, obj, where="training"):
        known = {_ATTR_NAMES.get(f.name, f.name) for f in fields(cls)}
        extra = set(obj) - known
        if extra:
            raise ValueError(f"unknown key {where}.{sorted(extra)[0]}")
        return cls(**{_JSON_NAMES.get(k, k): v for k, v in obj.items()})
