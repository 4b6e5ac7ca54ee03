"""Planted two-community dataset for desk-scale denoising experiments.

Each community owns half of the items and is divided into taste groups.
A user draws most interactions from its group's favourite items, some
from the rest of its community, and a few uniformly.  Observed social
edges stay inside a community (mostly inside a group); the noisy variant
adds cross-community edges.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import InteractionStore, Interactions, SocialGraph, split
from .rng import stream


@dataclass
class PlantedDataset:
    store: InteractionStore
    clean: SocialGraph
    noisy: SocialGraph
    community: np.ndarray
    group: np.ndarray


def planted_dataset(seed: int = 0, users_per_community: int = 100, num_items: int = 200, group_size: int = 10,
                    favourites: int = 10, interactions_per_user: int = 20, p_group: float = 0.6,
                    p_community: float = 0.3, friends_per_user: int = 5, p_friend_in_group: float = 0.8,
                    noise_ratio: float = 1.0, train_frac: float = 0.8,
                    val_frac: float = 0.0) -> PlantedDataset:
    rng = stream(seed, "planted")
    m = 2 * users_per_community
    half = num_items // 2
    community = np.repeat([0, 1], users_per_community)
    group = np.arange(m) // group_size
    groups_per_comm = users_per_community // group_size
    # favourite items per group, drawn from the community's half
    fav = {}
    for gidx in range(2 * groups_per_comm):
        c = gidx // groups_per_comm
        fav[gidx] = c * half + rng.choice(half, size=favourites, replace=False)

    pairs = []
    for u in range(m):
        c = community[u]
        mine: set[int] = set()
        while len(mine) < interactions_per_user:
            r = rng.random()
            if r < p_group:
                mine.add(int(rng.choice(fav[group[u]])))
            elif r < p_group + p_community:
                mine.add(int(c * half + rng.integers(half)))
            else:
                mine.add(int(rng.integers(num_items)))
        pairs.extend((u, i) for i in sorted(mine))
    store = split(Interactions(m, num_items, np.array(pairs)), train_frac, val_frac, seed)

    edges: set[tuple[int, int]] = set()
    for u in range(m):
        c = community[u]
        same_group = np.flatnonzero((group == group[u]) & (np.arange(m) != u))
        same_comm = np.flatnonzero((community == c) & (group != group[u]))
        friends = {b for a, b in edges if a == u}
        while len(friends) < friends_per_user:
            pool = same_group if rng.random() < p_friend_in_group else same_comm
            v = int(rng.choice(pool))
            friends.add(v)
            edges.add((u, v))
            edges.add((v, u))
    clean = SocialGraph(m, np.array(sorted(edges)))

    count = int(np.floor(noise_ratio * len(clean) + 0.5))
    existing = set(edges)
    fake = []
    while len(fake) < count:
        a = int(rng.integers(m))
        b = int(rng.integers(users_per_community)) + (1 - community[a]) * users_per_community
        if (a, b) not in existing:
            existing.add((a, b))
            fake.append((a, b))
    fake = np.array(fake, dtype=np.int64).reshape(-1, 2)
    noisy = SocialGraph(m, np.concatenate([clean.edges, fake]), injected=fake)
    return PlantedDataset(store, clean, noisy, community, group)


# Desk protocol: sparse planted data, beta picked on validation, test NDCG@10 compared.
DESK_DATA = dict(interactions_per_user=8, train_frac=0.7, val_frac=0.1)
DESK_TRAIN = dict(dim=32, batch_size=256, lr=0.005, init_std=0.1, max_epochs=25, patience=8, adv_period=1,
                  num_envs=4, monitor="validation", monitor_metric="ndcg@10", cutoffs=(10,))
DESK_BETAS = (0.0, 0.05, 0.10, 0.15, 0.20)


@dataclass
class DeskResult:
    beta: float
    validation: dict
    backbone: list
    sgil: list
    lightgcn: list

    @property
    def improvement(self) -> float:
        return float(np.mean(self.sgil) - np.mean(self.backbone))

    def rows(self) -> list[dict]:
        return [{"seed": s, "backbone_ndcg@10": b, "sgil_ndcg@10": g, "lightgcn_s_ndcg@10": l}
                for s, (b, g, l) in enumerate(zip(self.backbone, self.sgil, self.lightgcn))]


def desk_experiment(seeds=range(5), betas=DESK_BETAS, tune_seed: int = 0, noise_ratio: float = 1.0,
                    **overrides) -> DeskResult:
    """Backbone vs SGIL on the noisy planted graph.

    Beta is chosen by validation NDCG@10 on ``tune_seed``; every seed then
    trains both models and reports test NDCG@10 of the best-validation
    checkpoint.  The backbone is the single-environment model without the
    penalty (K=1, beta=0); the generator-free LightGCN-S is reported too.
    """
    from .config import TrainConfig
    from .evaluator import evaluate
    from .trainer import backbone_config, train

    base = TrainConfig(**{**DESK_TRAIN, **overrides})

    def data(seed):
        return planted_dataset(seed, noise_ratio=noise_ratio, **DESK_DATA)

    ds = data(tune_seed)
    validation = {float(b): train(base.replace(beta=float(b), seed=tune_seed), ds.store, ds.noisy).best_metric
                  for b in betas}
    beta = max(validation, key=lambda b: (validation[b], -b))
    backbone, sgil, lightgcn = [], [], []
    for seed in seeds:
        ds = data(seed)
        for cfg, out in ((base.replace(num_envs=1, beta=0.0, seed=seed), backbone),
                         (base.replace(beta=beta, seed=seed), sgil),
                         (backbone_config(base.replace(seed=seed)), lightgcn)):
            best = train(cfg, ds.store, ds.noisy)
            out.append(evaluate(best, ds.store, ds.noisy, cutoffs=(10,)).ndcg[10])
    return DeskResult(beta, validation, backbone, sgil, lightgcn)


def desk_ablation(beta: float, seeds=range(5), noise_ratio: float = 1.0, variants=("full", "w/o-EE", "w/o-IL"),
                  **overrides) -> dict[str, list]:
    """Test NDCG@10 per seed for the full model and the two training ablations."""
    from .config import TrainConfig, apply_ablation
    from .evaluator import evaluate
    from .trainer import train

    base = TrainConfig(**{**DESK_TRAIN, **overrides, "beta": beta})
    known = {"full": base, "w/o-EE": apply_ablation(base, "no-exploration"),
             "w/o-IL": apply_ablation(base, "no-invariance")}
    variants = {name: known[name] for name in variants}
    out = {name: [] for name in variants}
    for seed in seeds:
        ds = planted_dataset(seed, noise_ratio=noise_ratio, **DESK_DATA)
        for name, cfg in variants.items():
            best = train(cfg.replace(seed=seed), ds.store, ds.noisy)
            out[name].append(evaluate(best, ds.store, ds.noisy, cutoffs=(10,)).ndcg[10])
    return out
