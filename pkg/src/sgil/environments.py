"""Preference-guided stochastic edge dropout: K soft social environments."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import ConfigError, SocialGraph
from .numerics import ops
from .numerics.mlp import init_mlp2, mlp2_forward
from .numerics.tape import value_of
from .rng import stream

GEN_KEYS = ("W1", "b1", "W2", "b2")


def generator_name(k: int, key: str) -> str:
    return f"generator.{k}.{key}"


def init_generators(seed: int, num_envs: int, dim: int, hidden: int | None = None) -> dict[str, np.ndarray]:
    """K independently initialized two-layer MLPs with input width ``2 * dim``."""
    hidden = dim if hidden is None else hidden
    params = {}
    for k in range(num_envs):
        mlp = init_mlp2(stream(seed, "generator-init", k), 2 * dim, hidden)
        params.update({generator_name(k, key): v for key, v in mlp.items()})
    return params


def generator_params(params: dict, k: int) -> dict:
    return {key: params[generator_name(k, key)] for key in GEN_KEYS}


@dataclass
class SoftSocialGraph:
    """Observed social edges with one weight in [0, 1] per edge."""

    base: SocialGraph
    weights: object

    def __post_init__(self):
        w = value_of(self.weights)
        if w.shape != (len(self.base),):
            raise ValueError("one weight per observed edge required")

    def to_csv(self, path) -> None:
        w = value_of(self.weights)
        lines = ["src,dst,weight\n"]
        lines += [f"{a},{b},{x!r}\n" for (a, b), x in zip(self.base.edges.tolist(), w.tolist())]
        Path(path).write_text("".join(lines), encoding="utf-8")


def edge_logits(gen: dict, user_embeds, social: SocialGraph, activation: str = "relu"):
    """Raw logit per observed edge from the concatenated endpoint embeddings."""
    pair = ops.concat([ops.take_rows(user_embeds, social.src), ops.take_rows(user_embeds, social.dst)], axis=1)
    return mlp2_forward(pair, gen, activation)


def uniform_noise(rng: np.random.Generator, n: int) -> np.ndarray:
    """``delta ~ U(0, 1)`` with both endpoints excluded."""
    return rng.uniform(np.nextafter(0.0, 1.0), 1.0, size=n)


def concrete_relax(logits, temperature: float, delta: np.ndarray):
    """``sigmoid((log(delta / (1 - delta)) + w) / t)``; ``delta`` is held constant."""
    if not temperature > 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    noise = np.log(delta) - np.log1p(-delta)
    return ops.sigmoid(ops.scale(ops.add(logits, noise), 1.0 / temperature))


def sample_environment(gen: dict, user_embeds, social: SocialGraph, temperature: float = 0.2,
                       bias: float = 0.5, rng: np.random.Generator | None = None,
                       delta: np.ndarray | None = None, activation: str = "relu") -> SoftSocialGraph:
    """Per-edge weight ``min(relaxed_sample + bias, 1)`` over the observed edges."""
    if not 0.0 <= bias < 1.0:
        raise ConfigError(f"observation bias must lie in [0, 1), got {bias}")
    if delta is None:
        delta = uniform_noise(rng, len(social))
    soft = concrete_relax(edge_logits(gen, user_embeds, social, activation), temperature, delta)
    if bias > 0:
        soft = ops.minimum(ops.add(soft, bias), 1.0)
    return SoftSocialGraph(social, soft)


def env_noise(seed: int, num_envs: int, num_edges: int, step: int, purpose: str = "env-noise") -> list[np.ndarray]:
    """Per-environment noise vectors from streams ``(seed, purpose, k, step)``."""
    return [uniform_noise(stream(seed, purpose, k, step), num_edges) for k in range(num_envs)]


def simulate_all(params: dict, user_embeds, social: SocialGraph, num_envs: int, temperature: float = 0.2,
                 bias: float = 0.5, seed: int = 0, step: int = 0, deltas: list | None = None,
                 activation: str = "relu", purpose: str = "env-noise") -> list[SoftSocialGraph]:
    """Sample one soft graph per generator; noise is independent across environments."""
    if num_envs < 1:
        raise ConfigError("at least one environment is required")
    if deltas is None:
        deltas = env_noise(seed, num_envs, len(social), step, purpose)
    return [
        sample_environment(generator_params(params, k), user_embeds, social, temperature, bias,
                           delta=deltas[k], activation=activation)
        for k in range(num_envs)
    ]
