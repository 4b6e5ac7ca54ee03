"""Interaction / social-graph ingestion, splitting, noise injection, sparsity buckets."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import stream

BUCKETS = ("Low", "Medium", "High")


class DataError(ValueError):
    pass


class ConfigError(ValueError):
    pass


def _pairs(a) -> np.ndarray:
    return np.asarray(a, dtype=np.int64).reshape(-1, 2)


def _canonical(pairs: np.ndarray) -> np.ndarray:
    pairs = _pairs(pairs)
    if len(pairs) == 0:
        return pairs
    return np.unique(pairs, axis=0)


@dataclass
class Interactions:
    """Indexed positive interactions before splitting."""

    num_users: int
    num_items: int
    pairs: np.ndarray
    user_ids: np.ndarray = None
    item_ids: np.ndarray = None

    def __len__(self):
        return len(self.pairs)


@dataclass
class InteractionStore:
    num_users: int
    num_items: int
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    user_ids: np.ndarray = None
    item_ids: np.ndarray = None

    def __post_init__(self):
        self.train = _pairs(self.train)
        self.validation = _pairs(self.validation)
        self.test = _pairs(self.test)
        for part in (self.train, self.validation, self.test):
            if len(part) and (part[:, 0].max() >= self.num_users or part[:, 1].max() >= self.num_items or part.min() < 0):
                raise DataError("interaction index out of range")

    @property
    def user_degree(self) -> np.ndarray:
        return np.bincount(self.train[:, 0], minlength=self.num_users)

    def items_by_user(self, split: str = "train") -> list[np.ndarray]:
        pairs = getattr(self, split)
        order = np.lexsort((pairs[:, 1], pairs[:, 0]))
        p = pairs[order]
        bounds = np.searchsorted(p[:, 0], np.arange(self.num_users + 1))
        return [p[bounds[u]:bounds[u + 1], 1] for u in range(self.num_users)]


@dataclass
class SocialGraph:
    """Directed user-user edges in (src, dst) lexicographic order.

    ``injected`` lists the edges added by :func:`inject_noise` (audit only).
    """

    num_users: int
    edges: np.ndarray
    injected: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    def __post_init__(self):
        e = _pairs(self.edges)
        if len(e):
            if e.min() < 0 or e.max() >= self.num_users:
                raise DataError("social endpoint out of range")
            if np.any(e[:, 0] == e[:, 1]):
                raise DataError("self-loop in social graph")
            canon = _canonical(e)
            if len(canon) != len(e):
                raise DataError("duplicate social edge")
            e = canon
        self.edges = e
        self.injected = _canonical(self.injected)

    def __len__(self):
        return len(self.edges)

    @property
    def src(self) -> np.ndarray:
        return self.edges[:, 0]

    @property
    def dst(self) -> np.ndarray:
        return self.edges[:, 1]

    def symmetrized(self) -> "SocialGraph":
        both = np.concatenate([self.edges, self.edges[:, ::-1]])
        return SocialGraph(self.num_users, _canonical(both), self.injected)


@dataclass
class SparsityBuckets:
    assignment: dict[int, str]

    def users(self, bucket: str) -> np.ndarray:
        return np.array(sorted(u for u, b in self.assignment.items() if b == bucket), dtype=np.int64)


def _read_records(path: Path, widths: tuple[int, ...]) -> list[tuple[int, list[str]]]:
    if not path.exists():
        raise DataError(f"{path}: no such file")
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            fields = s.split()
            if len(fields) not in widths:
                raise DataError(f"{path}:{lineno}: expected {' or '.join(map(str, widths))} fields, got {len(fields)}")
            records.append((lineno, fields))
    if not records:
        raise DataError(f"{path}: empty dataset")
    return records


def _as_int(path, lineno, tok) -> int:
    try:
        return int(tok)
    except ValueError:
        raise DataError(f"{path}:{lineno}: not an integer: {tok!r}") from None


def load_dataset(interactions_path, social_path, rating_threshold: float | None = None,
                 symmetrize: bool = False) -> tuple[Interactions, SocialGraph]:
    """Parse raw files and densely re-index users and items.

    Users are the union of interaction users and social endpoints, ordered by
    raw ID; items are ordered by raw ID.  Ratings below ``rating_threshold``
    are dropped when a threshold is given.
    """
    ipath, spath = Path(interactions_path), Path(social_path)
    raw_pairs = []
    for lineno, f in _read_records(ipath, (2, 3)):
        u, i = _as_int(ipath, lineno, f[0]), _as_int(ipath, lineno, f[1])
        if rating_threshold is not None:
            if len(f) != 3:
                raise DataError(f"{ipath}:{lineno}: rating threshold given but line has no rating")
            try:
                r = float(f[2])
            except ValueError:
                raise DataError(f"{ipath}:{lineno}: bad rating {f[2]!r}") from None
            if r < rating_threshold:
                continue
        raw_pairs.append((u, i))
    raw_social = []
    for lineno, f in _read_records(spath, (2,)):
        raw_social.append((_as_int(spath, lineno, f[0]), _as_int(spath, lineno, f[1])))

    rp = _pairs(raw_pairs)
    rs = _pairs(raw_social)
    user_ids = np.unique(np.concatenate([rp[:, 0], rs.ravel()]))
    item_ids = np.unique(rp[:, 1])
    pairs = np.stack([np.searchsorted(user_ids, rp[:, 0]), np.searchsorted(item_ids, rp[:, 1])], axis=1)
    social = np.searchsorted(user_ids, rs)
    social = social[social[:, 0] != social[:, 1]]
    graph = SocialGraph(len(user_ids), _canonical(social))
    if symmetrize:
        graph = graph.symmetrized()
    return Interactions(len(user_ids), len(item_ids), _canonical(pairs), user_ids, item_ids), graph


def _round(x: float) -> int:
    return int(np.floor(x + 0.5))


def split(data: Interactions, train_frac: float = 0.8, val_frac: float = 0.0, seed: int = 0) -> InteractionStore:
    """Global random split: first ``train_frac`` of a permutation to train,
    next ``val_frac`` to validation, remainder to test."""
    if not 0.0 < train_frac <= 1.0:
        raise ConfigError(f"train_frac must lie in (0, 1], got {train_frac}")
    if not 0.0 <= val_frac < 1.0 or train_frac + val_frac > 1.0 + 1e-12:
        raise ConfigError(f"val_frac must lie in [0, 1) with train_frac + val_frac <= 1, got {val_frac}")
    n = len(data.pairs)
    perm = stream(seed, "split").permutation(n)
    n_train = _round(train_frac * n)
    n_val = min(_round(val_frac * n), n - n_train)
    parts = np.split(data.pairs[perm], [n_train, n_train + n_val])
    return InteractionStore(data.num_users, data.num_items, *(_canonical(p) for p in parts),
                            user_ids=data.user_ids, item_ids=data.item_ids)


def inject_noise(graph: SocialGraph, ratio: float, seed: int = 0) -> SocialGraph:
    """Add ``round(ratio * |edges|)`` fake directed edges, uniform over absent non-self pairs."""
    if ratio < 0:
        raise ConfigError("noise ratio must be nonnegative")
    m = graph.num_users
    count = _round(ratio * len(graph))
    capacity = m * (m - 1) - len(graph)
    if count > capacity:
        raise DataError(f"cannot inject {count} edges: only {capacity} free slots")
    if count == 0:
        return SocialGraph(m, graph.edges.copy())
    rng = stream(seed, "inject-noise")
    existing = graph.edges[:, 0] * m + graph.edges[:, 1]
    if m * m <= 4_000_000:
        codes = np.arange(m * m, dtype=np.int64)
        free = codes[(codes // m != codes % m) & ~np.isin(codes, existing)]
        chosen = rng.choice(free, size=count, replace=False)
    else:
        taken = set(existing.tolist())
        picked: list[int] = []
        while len(picked) < count:
            cand = rng.integers(0, m * m, size=2 * (count - len(picked)) + 16)
            for c in cand.tolist():
                if c // m != c % m and c not in taken:
                    taken.add(c)
                    picked.append(c)
                    if len(picked) == count:
                        break
        chosen = np.array(picked, dtype=np.int64)
    fake = np.stack([chosen // m, chosen % m], axis=1)
    return SocialGraph(m, np.concatenate([graph.edges, fake]), injected=fake)


def bucket_by_sparsity(store: InteractionStore, users=None) -> SparsityBuckets:
    """Equal-count terciles by train degree (ascending, ties by user ID).

    When sizes cannot be equal the lower buckets take the extra users.
    ``users`` restricts bucketing to a subset (default: all users).
    """
    deg = store.user_degree
    users = np.arange(store.num_users) if users is None else np.asarray(users, dtype=np.int64)
    order = users[np.lexsort((users, deg[users]))]
    assignment = {}
    for name, part in zip(BUCKETS, np.array_split(order, 3)):
        for u in part.tolist():
            assignment[u] = name
    return SparsityBuckets(assignment)


# ---------------------------------------------------------------- snapshots

def _write_pairs(path: Path, pairs: np.ndarray) -> None:
    path.write_text("".join(f"{a} {b}\n" for a, b in pairs.tolist()), encoding="utf-8")


def _read_pairs(path: Path) -> np.ndarray:
    text = path.read_text(encoding="utf-8").split()
    return np.array(text, dtype=np.int64).reshape(-1, 2)


def file_digest(paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).name.encode())
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def save_snapshot(directory, store: InteractionStore, graph: SocialGraph, **meta) -> dict:
    """Write the indexed dataset as text files plus ``manifest.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {"train": "train.txt", "validation": "validation.txt", "test": "test.txt", "social": "social.txt"}
    for part in ("train", "validation", "test"):
        _write_pairs(d / files[part], getattr(store, part))
    _write_pairs(d / files["social"], graph.edges)
    if len(graph.injected):
        files["injected"] = "injected.txt"
        _write_pairs(d / files["injected"], graph.injected)
    if store.user_ids is not None:
        files["user_map"] = "user_map.txt"
        (d / "user_map.txt").write_text("".join(f"{u}\n" for u in store.user_ids.tolist()), encoding="utf-8")
    if store.item_ids is not None:
        files["item_map"] = "item_map.txt"
        (d / "item_map.txt").write_text("".join(f"{i}\n" for i in store.item_ids.tolist()), encoding="utf-8")
    manifest = {
        "num_users": store.num_users,
        "num_items": store.num_items,
        "num_train": len(store.train),
        "num_validation": len(store.validation),
        "num_test": len(store.test),
        "num_social": len(graph),
        "split_mode": "global",
        "files": files,
        **meta,
    }
    manifest["fingerprint"] = file_digest(d / f for f in sorted(files.values()))
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def load_snapshot(directory) -> tuple[InteractionStore, SocialGraph, dict]:
    d = Path(directory)
    mpath = d / "manifest.json"
    if not mpath.exists():
        raise DataError(f"{mpath}: no such file")
    manifest = json.loads(mpath.read_text(encoding="utf-8"))
    files = manifest["files"]
    maps = {}
    for key in ("user_map", "item_map"):
        if key in files:
            maps[key] = np.array((d / files[key]).read_text(encoding="utf-8").split(), dtype=np.int64)
    store = InteractionStore(
        manifest["num_users"], manifest["num_items"],
        _read_pairs(d / files["train"]), _read_pairs(d / files["validation"]), _read_pairs(d / files["test"]),
        user_ids=maps.get("user_map"), item_ids=maps.get("item_map"),
    )
    injected = _read_pairs(d / files["injected"]) if "injected" in files else np.zeros((0, 2), dtype=np.int64)
    graph = SocialGraph(manifest["num_users"], _read_pairs(d / files["social"]), injected=injected)
    return store, graph, manifest


def save_social(path, graph: SocialGraph) -> None:
    _write_pairs(Path(path), graph.edges)
