"""Full-ranking Recall@N / NDCG@N and the experiment harnesses built on it."""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import BUCKETS, InteractionStore, SocialGraph, SparsityBuckets, inject_noise

_CHUNK = 512


def _discounts(n: int) -> np.ndarray:
    return 1.0 / np.log2(np.arange(2, n + 2))


def top_n(scores: np.ndarray, n: int) -> np.ndarray:
    """Indices of the ``n`` best items per row; ties go to the smaller item ID."""
    order = np.argsort(-scores, axis=1, kind="stable")
    return order[:, :n]


def rank_and_score(scores: np.ndarray, exclude: list[np.ndarray], test_items: list[np.ndarray],
                   cutoffs=(10, 20)) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Per-user recall and NDCG for each cutoff.

    ``scores`` has one row per user in ``test_items``.  ``exclude[u]`` lists
    items masked out of row ``u`` before ranking.  Rows with an empty test
    set get NaN and are dropped by the averaging helpers.
    """
    scores = np.array(scores, dtype=np.float64)
    rows = len(test_items)
    for u in range(rows):
        if len(exclude[u]):
            scores[u, exclude[u]] = -np.inf
    cutoffs = tuple(sorted(set(int(c) for c in cutoffs)))
    top = top_n(scores, min(max(cutoffs), scores.shape[1]))
    disc = _discounts(top.shape[1])
    out = {c: (np.full(rows, np.nan), np.full(rows, np.nan)) for c in cutoffs}
    for u in range(rows):
        truth = np.asarray(test_items[u])
        if truth.size == 0:
            continue
        hits = np.isin(top[u], truth)
        for c in cutoffs:
            h = hits[:c]
            out[c][0][u] = h.sum() / truth.size
            idcg = disc[:min(c, truth.size)].sum()
            out[c][1][u] = (h * disc[:h.size]).sum() / idcg
    return out


@dataclass
class EvalReport:
    recall: dict
    ndcg: dict
    num_users: int
    per_bucket: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def metric(self, name: str) -> float:
        kind, cutoff = name.lower().split("@")
        return (self.recall if kind == "recall" else self.ndcg)[int(cutoff)]

    def to_dict(self) -> dict:
        return {
            "num_users": self.num_users,
            "recall": {str(k): v for k, v in sorted(self.recall.items())},
            "ndcg": {str(k): v for k, v in sorted(self.ndcg.items())},
            "per_bucket": self.per_bucket,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        cut = sorted(self.recall)
        head = f"{'group':<8}{'users':>8}" + "".join(f"{'R@' + str(c):>10}{'N@' + str(c):>10}" for c in cut)
        lines = [head, f"{'all':<8}{self.num_users:>8}" + "".join(f"{self.recall[c]:>10.4f}{self.ndcg[c]:>10.4f}" for c in cut)]
        for b in BUCKETS:
            if b in self.per_bucket:
                row = self.per_bucket[b]
                lines.append(f"{b:<8}{row['users']:>8}" + "".join(
                    f"{row['recall'][str(c)]:>10.4f}{row['ndcg'][str(c)]:>10.4f}" for c in cut))
        return "\n".join(lines) + "\n"


def _macro(values: np.ndarray) -> float:
    v = values[~np.isnan(values)]
    return float(v.mean()) if v.size else 0.0


def evaluate_embeddings(users_emb: np.ndarray, items_emb: np.ndarray, store: InteractionStore, split: str = "test",
                        cutoffs=(10, 20), buckets: SparsityBuckets | None = None, threads: int = 1,
                        config: dict | None = None) -> EvalReport:
    """Score every user against every item and macro-average the metrics.

    Train items are always masked; when ranking test items, validation
    items are masked as well (and vice versa).
    """
    truth = store.items_by_user(split)
    train = store.items_by_user("train")
    other = store.items_by_user("validation" if split == "test" else "test") if split in ("test", "validation") else None
    users = np.array([u for u in range(store.num_users) if len(truth[u])], dtype=np.int64)
    cutoffs = tuple(sorted(set(cutoffs)))

    def shard(chunk):
        scores = users_emb[chunk] @ items_emb.T
        exclude = [np.concatenate([train[u], other[u]]) if other is not None else train[u] for u in chunk.tolist()]
        return rank_and_score(scores, exclude, [truth[u] for u in chunk.tolist()], cutoffs)

    chunks = [users[i:i + _CHUNK] for i in range(0, len(users), _CHUNK)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(shard, chunks))
    else:
        parts = [shard(c) for c in chunks]
    per_user = {c: (np.concatenate([p[c][0] for p in parts]) if parts else np.zeros(0),
                    np.concatenate([p[c][1] for p in parts]) if parts else np.zeros(0)) for c in cutoffs}
    report = EvalReport(
        recall={c: _macro(per_user[c][0]) for c in cutoffs},
        ndcg={c: _macro(per_user[c][1]) for c in cutoffs},
        num_users=len(users),
        config=config or {},
    )
    if buckets is not None:
        pos = {u: j for j, u in enumerate(users.tolist())}
        for b in BUCKETS:
            idx = np.array([pos[u] for u in buckets.users(b).tolist() if u in pos], dtype=np.int64)
            report.per_bucket[b] = {
                "users": int(idx.size),
                "recall": {str(c): _macro(per_user[c][0][idx]) for c in cutoffs},
                "ndcg": {str(c): _macro(per_user[c][1][idx]) for c in cutoffs},
            }
    return report


def evaluate(checkpoint, store: InteractionStore, social: SocialGraph, buckets: SparsityBuckets | None = None,
             cutoffs=(10, 20), split: str = "test", threads: int = 1) -> EvalReport:
    from .trainer import infer_embeddings

    users_emb, items_emb = infer_embeddings(checkpoint, store, social)
    return evaluate_embeddings(users_emb, items_emb, store, split, cutoffs, buckets, threads,
                               config=checkpoint.config.to_dict())


# --------------------------------------------------------------- harnesses

def relative_gain(value: float, reference: float) -> float:
    return (value - reference) / reference if reference else 0.0


def _test_metric(checkpoint, store, social, metric: str) -> float:
    """Test-split value of ``metric`` for the checkpoint chosen by the monitor split."""
    cutoff = int(metric.split("@")[1])
    return evaluate(checkpoint, store, social, cutoffs=(cutoff,)).metric(metric)


def noise_sweep(config, store: InteractionStore, social: SocialGraph, ratios, seed: int = 0,
                metric: str = "ndcg@20") -> list[dict]:
    """Train backbone and full model on each noised graph; one row per (ratio, model).

    Metrics are test-split values of each run's best checkpoint.
    """
    from .trainer import backbone_config, train

    rows = []
    for ratio in ratios:
        noisy = inject_noise(social, float(ratio), seed)
        base = _test_metric(train(backbone_config(config), store, noisy), store, noisy, metric)
        full = _test_metric(train(config, store, noisy), store, noisy, metric)
        rows.append({"ratio": float(ratio), "model": "backbone", metric: base, "relative_gain": 0.0})
        rows.append({"ratio": float(ratio), "model": "sgil", metric: full, "relative_gain": relative_gain(full, base)})
    return rows


def sensitivity_grid(config, store: InteractionStore, social: SocialGraph, env_counts=(1, 2, 3, 4, 5),
                     betas=(0.0, 0.05, 0.10, 0.15, 0.20), metric: str = "ndcg@20") -> np.ndarray:
    """One training run per (K, beta) cell; returns a K-by-beta matrix."""
    from .trainer import train

    grid = np.zeros((len(env_counts), len(betas)))
    for a, k in enumerate(env_counts):
        for b, beta in enumerate(betas):
            best = train(config.replace(num_envs=int(k), beta=float(beta)), store, social)
            grid[a, b] = _test_metric(best, store, social, metric)
    return grid


def write_rows_csv(path, rows: list[dict]) -> None:
    if not rows:
        Path(path).write_text("", encoding="utf-8")
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def write_grid_csv(path, grid: np.ndarray, env_counts, betas, metric: str = "ndcg@20") -> None:
    lines = [",".join(["K"] + [f"beta={b!r}" for b in betas]) + "\n"]
    for k, row in zip(env_counts, grid):
        lines.append(",".join([str(k)] + [repr(float(v)) for v in row]) + "\n")
    Path(path).write_text("".join(lines), encoding="utf-8")
