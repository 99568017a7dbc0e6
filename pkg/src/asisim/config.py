"""Configuration dataclasses for the environment and the PPO learner."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from typing import Any

TRAINING = "training"
EVALUATION = "evaluation"


@dataclass(frozen=True)
class EnvConfig:
    dt: float = 0.1
    harm_radius: float = 2.7
    ray_range: float = 20.0
    shooter_speed: float = 2.0
    shooter_radius: float = 0.4
    no_target_timeout: float = 20.0
    occupant_count: int = 100
    freeze_time: float = 3.0
    occupant_speed: float = 1.5
    target_radius: float = 0.3
    max_episode_steps: int = 3000
    mode: str = EVALUATION

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "mode":
                if v not in (TRAINING, EVALUATION):
                    raise ValueError(f"mode must be {TRAINING!r} or {EVALUATION!r}, got {v!r}")
            elif f.name == "occupant_count":
                if v < 0:
                    raise ValueError("occupant_count must be non-negative")
            elif f.name == "occupant_speed":
                if v < 0:
                    raise ValueError("occupant_speed must be non-negative")
            elif not v > 0:
                raise ValueError(f"{f.name} must be positive, got {v!r}")

    @classmethod
    def training(cls, **overrides) -> "EnvConfig":
        """Training defaults: 60 respawned occupants, wide shooter spawn."""
        return cls(**{"occupant_count": 60, "mode": TRAINING, **overrides})

    @classmethod
    def evaluation(cls, **overrides) -> "EnvConfig":
        return cls(**{"occupant_count": 100, "mode": EVALUATION, **overrides})

    @property
    def timeout_steps(self) -> int:
        return int(round(self.no_target_timeout / self.dt))


@dataclass(frozen=True)
class PpoConfig:
    max_steps: int = 5_000_000
    time_horizon: int = 64
    summary_frequency: int = 50_000
    keep_checkpoints: int = 100
    batch_size: int = 2048
    buffer_size: int = 20480
    learning_rate: float = 3.0e-4
    beta: float = 0.01
    epsilon: float = 0.2
    lambd: float = 0.95
    num_epoch: int = 3
    gamma: float = 0.99
    extrinsic_strength: float = 1.0
    learning_rate_schedule: str = "linear"
    beta_schedule: str = "linear"
    epsilon_schedule: str = "linear"
    normalize: bool = True
    hidden_units: int = 128
    num_layers: int = 2
    value_coef: float = 0.5
    # checkpoint cadence in environment steps; 0 means once per summary
    checkpoint_interval: int = 0

    def __post_init__(self):
        if self.buffer_size % self.batch_size:
            raise ValueError("buffer_size must be divisible by batch_size")
        if not (0 < self.gamma <= 1 and 0 < self.lambd <= 1):
            raise ValueError("gamma and lambd must lie in (0, 1]")
        for name in ("learning_rate_schedule", "beta_schedule", "epsilon_schedule"):
            if getattr(self, name) not in ("linear", "constant"):
                raise ValueError(f"{name} must be 'linear' or 'constant'")
        if self.num_layers < 1 or self.hidden_units < 1:
            raise ValueError("network must have at least one hidden layer")


def to_dict(cfg) -> dict[str, Any]:
    return asdict(cfg)


def from_dict(cls, data: dict[str, Any] | None, **overrides):
    """Build ``cls`` from a (possibly partial) mapping; unknown keys are an error."""
    data = dict(data or {})
    data.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {', '.join(unknown)}")
    return cls(**data)


def config_hash(*cfgs) -> str:
    payload = json.dumps([asdict(c) for c in cfgs], sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def with_overrides(cfg, **kw):
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
