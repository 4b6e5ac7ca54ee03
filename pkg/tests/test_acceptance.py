"""Acceptance gate: one PASS/FAIL line per criterion (see the terminal summary).

Criteria 5 and 6 train on the planted desk dataset and take about two
minutes together.  Criterion 7 is a long reproduction run kept out of CI.
"""
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import brute_force_metrics, objective_gradient_check
from sgil.cli import main
from sgil.config import TrainConfig
from sgil.evaluator import rank_and_score
from sgil.numerics import value_of
from sgil.objectives import hsic_rbf, invariance_objective
from sgil.synthetic import DESK_BETAS, desk_ablation, desk_experiment, planted_dataset
from sgil.trainer import Trainer

ROOT = Path(__file__).resolve().parents[1]
_shared: dict = {}


def record(number: int, title: str, ok, detail: str) -> None:
    status = ok if isinstance(ok, str) else {True: "PASS", False: "FAIL", None: "SKIP"}[ok]
    line = f"[criterion {number}] {status}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def test_1_gradient_oracle():
    t0 = time.perf_counter()
    errors = objective_gradient_check(h=1e-3)
    elapsed = time.perf_counter() - t0
    worst = max(errors, key=errors.get)
    ok = errors[worst] < 1e-4 and elapsed < 10.0
    record(1, "gradient oracle", ok,
           f"{len(errors)} parameter groups, max rel err {errors[worst]:.2e} ({worst}), {elapsed:.2f}s")
    assert ok


def test_2_metric_oracle():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        n_items = int(rng.integers(1, 7))
        scores = rng.integers(-2, 3, size=n_items).astype(float)
        order = rng.permutation(n_items)
        n_truth = int(rng.integers(1, n_items + 1))
        n_excl = int(rng.integers(0, n_items - n_truth + 1))
        truth = sorted(order[:n_truth].tolist())
        excluded = sorted(order[n_truth:n_truth + n_excl].tolist())
        cutoff = int(rng.integers(1, 8))
        out = rank_and_score(scores[None, :], [np.array(excluded, dtype=int)], [np.array(truth)], (cutoff,))
        recall, ndcg = brute_force_metrics(scores, excluded, truth, cutoff)
        worst = max(worst, abs(out[cutoff][0][0] - recall), abs(out[cutoff][1][0] - ndcg))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 5.0
    record(2, "metric oracle", ok, f"200 fixtures (<=6 items), max abs diff {worst:.1e}, {elapsed:.2f}s")
    assert ok


def _dense_hsic(x, y, sigma=1.0):
    n = len(x)
    kx = np.exp(-((x[:, None, :] - x[None, :, :]) ** 2).sum(-1) / (2 * sigma ** 2))
    ky = np.exp(-((y[:, None, :] - y[None, :, :]) ** 2).sum(-1) / (2 * sigma ** 2))
    h = np.eye(n) - np.full((n, n), 1.0 / n)
    return np.trace(kx @ h @ ky @ h) / (n - 1) ** 2


def test_3_hsic_oracle():
    rng = np.random.default_rng(3)
    worst, const = 0.0, []
    for n in range(2, 9):
        for _ in range(10):
            x, y = rng.normal(size=(n, 3)), rng.normal(size=(n, 2))
            worst = max(worst, abs(float(hsic_rbf(x, y)) - _dense_hsic(x, y)))
            const.append(float(hsic_rbf(np.full((n, 3), rng.normal()), y)))
    ok = worst <= 1e-10 and all(v == 0.0 for v in const)
    record(3, "HSIC oracle", ok, f"n=2..8, max abs diff {worst:.1e}, HSIC(constant, Y) values {set(const)}")
    assert ok


def test_4_degenerate_variance(tmp_path):
    ds = planted_dataset(0, users_per_community=20, num_items=40, group_size=5, favourites=5, interactions_per_user=8)
    # one epoch of exactly 10 batches
    batch = -(-len(ds.store.train) // 10)
    base = TrainConfig(dim=8, batch_size=batch, lr=0.01, init_std=0.1, num_envs=1, adv_period=1)
    logs = []
    for tag, cfg in (("sgil", base.replace(beta=0.15)), ("backbone", base.replace(beta=0.0))):
        Trainer(cfg, ds.store, ds.noisy, log_dir=tmp_path / tag).run_epoch()
        logs.append((tmp_path / tag / "loss_log.csv").read_bytes())
    variances = [float(line.split(b",")[-2]) for line in logs[0].splitlines()[1:]]
    same = invariance_objective([np.asarray(0.3)] * 4, 0.15)
    ok = (logs[0] == logs[1] and len(variances) == 10 and all(v == 0.0 for v in variances)
          and float(value_of(same.variance)) == 0.0)
    record(4, "degenerate variance", ok,
           "K=1 (beta=0.15 vs beta=0) loss logs bit-identical over 10 batches; variance exactly 0")
    assert ok


@pytest.mark.slow
def test_5_desk_denoising():
    t0 = time.perf_counter()
    result = desk_experiment(seeds=range(5), betas=DESK_BETAS)
    elapsed = time.perf_counter() - t0
    _shared["desk"] = result
    sgil, base, lgcn = np.mean(result.sgil), np.mean(result.backbone), np.mean(result.lightgcn)
    ok = sgil >= base and result.improvement > 0 and elapsed < 300
    record(5, "desk denoising", ok,
           f"beta={result.beta} (validation-tuned); mean test NDCG@10 SGIL {sgil:.4f} vs backbone(K=1,beta=0) "
           f"{base:.4f} (diff {result.improvement:+.4f}); generator-free LightGCN-S {lgcn:.4f}; {elapsed:.0f}s")
    assert ok


@pytest.mark.slow
def test_6_ablation_ordering():
    desk = _shared.get("desk") or desk_experiment(seeds=range(5))
    scores = desk_ablation(desk.beta, seeds=range(5), variants=("w/o-EE", "w/o-IL"))
    scores["full"] = list(desk.sgil)
    means = {k: float(np.mean(v)) for k, v in scores.items()}

    def within_noise(a, b):
        d = np.array(scores[a]) - np.array(scores[b])
        return d.mean() >= -2 * d.std(ddof=1) / np.sqrt(len(d))

    strict = means["full"] >= means["w/o-EE"] >= means["w/o-IL"]
    noisy = within_noise("full", "w/o-EE") and within_noise("w/o-EE", "w/o-IL")
    verdict = "ordering holds" if strict else ("inverted but within noise" if noisy else "inverted beyond noise")
    record(6, "ablation ordering (flag only)", "PASS" if strict else "FLAG",
           f"full {means['full']:.4f}, w/o-EE {means['w/o-EE']:.4f}, w/o-IL {means['w/o-IL']:.4f}: {verdict}")
    assert all(np.isfinite(v) for v in means.values())


def test_7_long_reproduction_is_scripted():
    script = ROOT / "scripts" / "reproduce_douban.py"
    exists = script.exists()
    record(7, "Douban reproduction", None if exists else False,
           f"not run in CI; see {script.relative_to(ROOT)}" if exists else "script missing")
    assert exists
    pytest.skip("long-running reproduction target, excluded from CI")


def test_8_determinism(tmp_path):
    ds = planted_dataset(1, users_per_community=15, num_items=30, group_size=5, favourites=5, interactions_per_user=6)
    pairs = np.concatenate([ds.store.train, ds.store.test])
    (tmp_path / "i.txt").write_text("".join(f"{u} {i}\n" for u, i in pairs))
    (tmp_path / "s.txt").write_text("".join(f"{a} {b}\n" for a, b in ds.clean.edges))
    (tmp_path / "c.conf").write_text("dim = 8\nbatch_size = 32\nmax_epochs = 2\nlr = 0.01\nadv_period = 3\n")

    def run(tag):
        d = tmp_path / tag
        cmds = [
            ["prepare", "--interactions", str(tmp_path / "i.txt"), "--social", str(tmp_path / "s.txt"),
             "--out", str(d / "snap"), "--seed", "5"],
            ["inject-noise", "--dataset", str(d / "snap"), "--ratio", "0.5", "--seed", "2", "--out", str(d / "noisy")],
            ["train", "--config", str(tmp_path / "c.conf"), "--dataset", str(d / "noisy"), "--out", str(d / "run"),
             "--threads", "1"],
            ["evaluate", "--checkpoint", str(d / "run" / "best"), "--dataset", str(d / "noisy"), "--buckets",
             "--threads", "1"],
            ["sweep", "--config", str(tmp_path / "c.conf"), "--dataset", str(d / "noisy"), "--out", str(d / "sweep"),
             "--grid", "k=1..2", "beta=0,0.15", "--set", "max_epochs=1", "--threads", "1"],
        ]
        assert all(main(c) == 0 for c in cmds)
        return {p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*"))
                if p.is_file() and p.name not in ("run_manifest.json", "timing.csv")}

    a, b = run("a"), run("b")
    diff = sorted(str(k) for k in a if a[k] != b.get(k))
    ok = a.keys() == b.keys() and not diff
    record(8, "determinism", ok, f"{len(a)} files compared byte-for-byte across two --threads 1 runs; "
                                 f"{len(diff)} differ (wall-clock sidecars excluded)")
    assert ok, diff
