import numpy as np
import pytest

from sgil.data import InteractionStore, SocialGraph

# Lines recorded by the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def central_diff(f, x: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Central finite differences of scalar ``f`` w.r.t. every entry of ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * h)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def tiny_store(seed: int = 0, num_users: int = 6, num_items: int = 8, num_social: int = 10,
               train_per_user: int = 3) -> tuple[InteractionStore, SocialGraph]:
    """Small random dataset: every user has train items and one test item."""
    rng = np.random.default_rng(seed)
    train, test = [], []
    for u in range(num_users):
        items = rng.choice(num_items, size=train_per_user + 1, replace=False)
        train += [(u, int(i)) for i in sorted(items[:-1])]
        test.append((u, int(items[-1])))
    codes = rng.choice([a * num_users + b for a in range(num_users) for b in range(num_users) if a != b],
                       size=num_social, replace=False)
    edges = np.array(sorted((int(c) // num_users, int(c) % num_users) for c in codes), dtype=np.int64)
    store = InteractionStore(num_users, num_items, np.array(train), np.zeros((0, 2), dtype=np.int64), np.array(test))
    return store, SocialGraph(num_users, edges)


@pytest.fixture
def tiny():
    return tiny_store(0)
