import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import tiny_store
from sgil.data import (ConfigError, DataError, Interactions, SocialGraph, bucket_by_sparsity, inject_noise,
                       load_dataset, load_snapshot, save_snapshot, split)


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_reindexes_densely(tmp_path):
    inter = write(tmp_path / "i.txt", "# header\n10 500\n10 300\n\n42 500\n10 500\n")
    social = write(tmp_path / "s.txt", "42 7\n10 42\n7 7\n")
    data, graph = load_dataset(inter, social)
    # users: union of 7, 10, 42 ordered by raw id; items 300, 500
    assert data.user_ids.tolist() == [7, 10, 42] and data.item_ids.tolist() == [300, 500]
    assert data.pairs.tolist() == [[1, 0], [1, 1], [2, 1]]
    assert graph.edges.tolist() == [[1, 2], [2, 0]]


def test_rating_threshold(tmp_path):
    inter = write(tmp_path / "i.txt", "1 1 5\n1 2 2\n2 1 4\n")
    social = write(tmp_path / "s.txt", "1 2\n")
    data, _ = load_dataset(inter, social, rating_threshold=4)
    assert len(data) == 2


@pytest.mark.parametrize("body, where", [("1 2\n1 x\n", ":2:"), ("1 2 3 4\n", ":1:"), ("", "empty")])
def test_parse_errors_name_file_and_line(tmp_path, body, where):
    inter = write(tmp_path / "i.txt", body)
    social = write(tmp_path / "s.txt", "1 2\n")
    with pytest.raises(DataError, match=where):
        load_dataset(inter, social)


def test_missing_file_named(tmp_path):
    with pytest.raises(DataError, match="nope.txt"):
        load_dataset(tmp_path / "nope.txt", tmp_path / "s.txt")


def test_social_graph_validation():
    with pytest.raises(DataError):
        SocialGraph(3, [[0, 0]])
    with pytest.raises(DataError):
        SocialGraph(3, [[0, 1], [0, 1]])
    assert SocialGraph(3, [[2, 0], [0, 1]]).edges.tolist() == [[0, 1], [2, 0]]
    assert len(SocialGraph(3, [[0, 1]]).symmetrized()) == 2


def make_interactions(n_users=20, n_items=15, n=100, seed=0):
    rng = np.random.default_rng(seed)
    codes = rng.choice(n_users * n_items, size=n, replace=False)
    pairs = np.stack([codes // n_items, codes % n_items], axis=1)
    return Interactions(n_users, n_items, pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 120), st.floats(0.05, 1.0), st.floats(0.0, 0.5), st.integers(0, 100))
def test_split_partitions_and_sizes(n, train_frac, val_frac, seed):
    if train_frac + val_frac > 1.0:
        return
    data = make_interactions(n=n)
    store = split(data, train_frac, val_frac, seed)
    parts = [store.train, store.validation, store.test]
    joined = np.concatenate(parts)
    assert len(joined) == n
    assert len({tuple(p) for p in joined.tolist()}) == n
    assert len(store.train) == int(np.floor(train_frac * n + 0.5))


def test_split_is_seeded():
    data = make_interactions()
    a, b, c = split(data, 0.8, 0.1, 7), split(data, 0.8, 0.1, 7), split(data, 0.8, 0.1, 8)
    assert np.array_equal(a.test, b.test) and not np.array_equal(a.test, c.test)
    assert (len(a.train), len(a.validation), len(a.test)) == (80, 10, 10)


def test_split_rejects_bad_fractions():
    with pytest.raises(ConfigError):
        split(make_interactions(), 0.0)
    with pytest.raises(ConfigError):
        split(make_interactions(), 0.8, 0.5)


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 12), st.floats(0.0, 2.0), st.integers(0, 50))
def test_inject_noise_counts_and_validity(m, ratio, seed):
    base = SocialGraph(m, [(a, (a + 1) % m) for a in range(m)])
    cap = m * (m - 1) - len(base)
    want = int(np.floor(ratio * len(base) + 0.5))
    if want > cap:
        with pytest.raises(DataError):
            inject_noise(base, ratio, seed)
        return
    noisy = inject_noise(base, ratio, seed)
    assert len(noisy) == len(base) + want and len(noisy.injected) == want
    assert not np.any(noisy.edges[:, 0] == noisy.edges[:, 1])
    original = {tuple(e) for e in base.edges.tolist()}
    assert original <= {tuple(e) for e in noisy.edges.tolist()}
    assert not original & {tuple(e) for e in noisy.injected.tolist()}


def test_inject_noise_deterministic_and_zero():
    base = SocialGraph(10, [(0, 1), (1, 2), (2, 3), (5, 6)])
    assert np.array_equal(inject_noise(base, 1.0, 3).edges, inject_noise(base, 1.0, 3).edges)
    assert len(inject_noise(base, 0.0, 3)) == 4
    with pytest.raises(ConfigError):
        inject_noise(base, -0.1)


def test_buckets_terciles_ties_by_id():
    store, _ = tiny_store(0, num_users=7, train_per_user=2)
    buckets = bucket_by_sparsity(store)
    sizes = [len(buckets.users(b)) for b in ("Low", "Medium", "High")]
    assert sizes == [3, 2, 2]
    # equal degrees everywhere, so buckets follow user ID
    assert buckets.users("Low").tolist() == [0, 1, 2]


def test_buckets_follow_degree():
    train = [(0, 0), (0, 1), (0, 2), (1, 0), (2, 0), (2, 1)]
    from sgil.data import InteractionStore
    store = InteractionStore(3, 3, np.array(train), np.zeros((0, 2)), np.zeros((0, 2)))
    b = bucket_by_sparsity(store)
    assert (b.users("Low").tolist(), b.users("Medium").tolist(), b.users("High").tolist()) == ([1], [2], [0])


def test_snapshot_roundtrip_and_fingerprint(tmp_path):
    data = make_interactions()
    store = split(data, 0.8, 0.1, 1)
    graph = inject_noise(SocialGraph(20, [(0, 1), (3, 4)]), 1.0, 0)
    m1 = save_snapshot(tmp_path / "a", store, graph, seed=1)
    m2 = save_snapshot(tmp_path / "b", store, graph, seed=1)
    assert m1["fingerprint"] == m2["fingerprint"] and m1["split_mode"] == "global"
    back, g, manifest = load_snapshot(tmp_path / "a")
    assert np.array_equal(back.train, store.train) and np.array_equal(back.test, store.test)
    assert np.array_equal(g.edges, graph.edges) and np.array_equal(g.injected, graph.injected)
    assert manifest["seed"] == 1
