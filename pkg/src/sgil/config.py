"""Training configuration and the flat ``key = value`` config file format."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .data import ConfigError

ABLATIONS = ("no_env_gen", "no_invariance", "no_exploration")


@dataclass
class TrainConfig:
    dim: int = 64
    layers: int = 3
    tau: float = 0.2
    temperature: float = 0.2
    bias: float = 0.5
    num_envs: int = 4
    beta: float = 0.15
    lr: float = 0.001
    adv_lr: float | None = None
    batch_size: int = 2048
    adv_period: int = 20
    max_epochs: int = 100
    patience: int = 20
    seed: int = 0
    init_std: float = 0.01
    hidden: int | None = None
    activation: str = "relu"
    loss: str = "softmax"
    reg: float = 0.0
    mask_positives: bool = False
    generator_input: str = "table"
    hsic_weight: float = 0.0
    hsic_sigma: float = 1.0
    monitor: str = "test"
    monitor_metric: str = "ndcg@20"
    cutoffs: tuple = (10, 20)
    no_env_gen: bool = False
    no_invariance: bool = False
    no_exploration: bool = False

    def __post_init__(self):
        self.cutoffs = tuple(int(c) for c in self.cutoffs)
        if self.num_envs < 1:
            raise ConfigError("num_envs must be >= 1")
        if self.beta < 0:
            raise ConfigError("beta must be >= 0")
        if self.adv_period < 1:
            raise ConfigError("adv_period must be >= 1 (use no_exploration to disable ascent)")
        if self.tau <= 0 or self.temperature <= 0:
            raise ConfigError("tau and temperature must be positive")
        if not 0.0 <= self.bias < 1.0:
            raise ConfigError("bias must lie in [0, 1)")
        if self.loss not in ("softmax", "bpr", "pointwise"):
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.generator_input not in ("table", "propagated"):
            raise ConfigError(f"unknown generator_input {self.generator_input!r}")
        if self.monitor not in ("test", "validation"):
            raise ConfigError(f"unknown monitor split {self.monitor!r}")
        if self.batch_size < 1 or self.max_epochs < 0 or self.patience < 1:
            raise ConfigError("batch_size and patience must be >= 1, max_epochs >= 0")

    @property
    def envs(self) -> int:
        """Number of environments actually simulated."""
        return 1 if self.no_env_gen else self.num_envs

    @property
    def penalty(self) -> float:
        return 0.0 if (self.no_env_gen or self.no_invariance) else self.beta

    @property
    def explores(self) -> bool:
        return not (self.no_env_gen or self.no_exploration)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["cutoffs"] = list(self.cutoffs)
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}


def _coerce(key: str, raw):
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    default = getattr(TrainConfig(), key)
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if key == "cutoffs":
        return tuple(int(c) for c in text.replace(",", " ").split())
    if key in ("adv_lr", "hidden") and text.lower() in ("", "none"):
        return None
    try:
        if key == "hidden" or isinstance(default, int):
            return int(text)
        if key == "adv_lr" or isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None
    return text


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (p.strip() for p in s.split("=", 1))
        out[key] = _coerce(key, value)
    return out


def load_config(path=None, overrides: dict | None = None) -> TrainConfig:
    """Config file values, then ``overrides`` (which win)."""
    values = parse_config_text(Path(path).read_text(encoding="utf-8")) if path else {}
    for key, value in (overrides or {}).items():
        values[key] = _coerce(key, value)
    return TrainConfig(**values)


def dump_config(config: TrainConfig) -> str:
    lines = []
    for key, value in sorted(config.to_dict().items()):
        if isinstance(value, list):
            value = ",".join(map(str, value))
        lines.append(f"{key} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"


def apply_ablation(config: TrainConfig, name: str) -> TrainConfig:
    key = name.replace("-", "_")
    if key not in ABLATIONS:
        raise ConfigError(f"unknown ablation {name!r}")
    return config.replace(**{key: True})


__all__ = ["ABLATIONS", "TrainConfig", "apply_ablation", "dump_config", "load_config", "parse_config_text"]
