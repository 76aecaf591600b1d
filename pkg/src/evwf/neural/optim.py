from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    rms_rho: float = 0.9
    rms_eps: float = 1e-8
    dropout_rate: float = 0.25
    batch_size: int = 32
    epochs: int = 30
    rng_seed: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class RmsPropState:
    cache: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def like(cls, params) -> "RmsPropState":
        return cls([np.zeros_like(p) for p in params])


def rmsprop_step(state: RmsPropState, params, grads, cfg: TrainConfig):
    """In-place update: ``cache = rho cache + (1-rho) g^2``; ``p -= lr g / (sqrt(cache) + eps)``."""
    if not state.cache:
        state.cache = [np.zeros_like(p) for p in params]
    for p, g, c in zip(params, grads, state.cache, strict=True):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        c *= cfg.rms_rho
        c += (1.0 - cfg.rms_rho) * g * g
        p -= cfg.lr * g / (np.sqrt(c) + cfg.rms_eps)
    return params
