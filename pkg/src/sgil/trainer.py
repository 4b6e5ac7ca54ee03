"""Invariance-penalized training with periodic adversarial environment exploration."""
from __future__ import annotations

import copy
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import objectives
from .config import TrainConfig
from .data import InteractionStore, SocialGraph
from .encoder import HeteroLayout, encode, hetero_layout, init_tables
from .environments import env_noise, generator_params, init_generators, sample_environment
from .evaluator import EvalReport, evaluate_embeddings
from .numerics import ops
from .numerics.container import load_tensors, save_tensors
from .numerics.optim import AdamState, NumericalError, adam_step
from .numerics.tape import Tape, value_of
from .rng import stream

log = logging.getLogger(__name__)

EMBEDDINGS = ("user_embedding", "item_embedding")


def backbone_config(config: TrainConfig) -> TrainConfig:
    """The LightGCN-S + ERM path: one environment, all social weights 1."""
    return config.replace(no_env_gen=True)


def init_params(config: TrainConfig, num_users: int, num_items: int) -> dict[str, np.ndarray]:
    params = init_tables(stream(config.seed, "embedding-init"), num_users, num_items, config.dim, config.init_std)
    if not config.no_env_gen:
        params.update(init_generators(config.seed, config.envs, config.dim, config.hidden))
    return params


def is_generator(name: str) -> bool:
    return name.startswith("generator.")


@dataclass
class Checkpoint:
    config: TrainConfig
    params: dict
    descent: AdamState
    ascent: AdamState
    epoch: int = 0
    step: int = 0
    best_metric: float = -math.inf
    best_epoch: int = 0
    best_metrics: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    def copy(self) -> "Checkpoint":
        return copy.deepcopy(self)

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_tensors(d / "params.sgt", self.params)
        save_tensors(d / "optimizer.sgt", {**self.descent.tensors("descent"), **self.ascent.tensors("ascent")})
        meta = {
            "config": self.config.to_dict(),
            "config_digest": self.config.digest(),
            "epoch": self.epoch,
            "step": self.step,
            "best_metric": self.best_metric if math.isfinite(self.best_metric) else None,
            "best_epoch": self.best_epoch,
            "best_metrics": self.best_metrics,
            "history": self.history,
            "optimizers": {name: {"lr": s.lr, "beta1": s.beta1, "beta2": s.beta2, "eps": s.eps, "step": s.step}
                           for name, s in (("descent", self.descent), ("ascent", self.ascent))},
            # every random draw is a pure function of (seed, purpose, indices)
            "rng": {"seed": self.config.seed, "next_epoch": self.epoch + 1, "next_step": self.step + 1},
        }
        (d / "checkpoint.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, directory) -> "Checkpoint":
        d = Path(directory)
        meta = json.loads((d / "checkpoint.json").read_text(encoding="utf-8"))
        config = TrainConfig(**meta["config"])
        opt = load_tensors(d / "optimizer.sgt")
        states = {}
        for name, s in meta["optimizers"].items():
            st = AdamState(lr=s["lr"], beta1=s["beta1"], beta2=s["beta2"], eps=s["eps"], step=s["step"])
            st.load_tensors(name, opt)
            states[name] = st
        best = meta["best_metric"]
        return cls(config, load_tensors(d / "params.sgt"), states["descent"], states["ascent"], meta["epoch"],
                   meta["step"], -math.inf if best is None else best, meta["best_epoch"], meta["best_metrics"],
                   meta["history"])


class Trainer:
    """Runs the batch loop over a fixed dataset and social graph."""

    def __init__(self, config: TrainConfig, store: InteractionStore, social: SocialGraph,
                 checkpoint: Checkpoint | None = None, log_dir=None, threads: int = 1):
        self.config = config
        self.store = store
        self.social = social
        self.layout: HeteroLayout = hetero_layout(social, store.train, store.num_users, store.num_items)
        self.train_items = store.items_by_user("train")
        self.threads = threads
        if checkpoint is None:
            checkpoint = Checkpoint(config, init_params(config, store.num_users, store.num_items),
                                    AdamState(lr=config.lr), AdamState(lr=config.adv_lr or config.lr))
        self.state = checkpoint
        self.best: Checkpoint | None = None
        self.log_dir = Path(log_dir) if log_dir is not None else None
        self.loss_rows: list[list] = []

    # ------------------------------------------------------------ forward

    def environment_weights(self, tensors, deltas) -> list:
        return environment_weights(self.config, self.social, self.layout, tensors, deltas)

    def step_noise(self, step: int, purpose: str = "env-noise") -> list:
        if self.config.no_env_gen:
            return [None]
        return env_noise(self.config.seed, self.config.envs, len(self.social), step, purpose)

    def env_losses(self, tensors, pairs: np.ndarray, step: int, deltas) -> tuple[list, list]:
        """ERM loss per environment plus the propagated embeddings."""
        cfg = self.config
        batch = objectives.Batch.from_pairs(pairs)
        exclude = batch.exclusion_mask(self.train_items) if cfg.mask_positives and cfg.loss == "softmax" else None
        triples = None
        if cfg.loss != "softmax":
            neg = objectives.sample_negatives(stream(cfg.seed, "negatives", step), batch.users, self.train_items,
                                              self.store.num_items)
            triples = np.stack([batch.users, batch.items, neg], axis=1)
        losses, reps = [], []
        for w in self.environment_weights(tensors, deltas):
            users, items = encode(self.layout, w, tensors["user_embedding"], tensors["item_embedding"], cfg.layers)
            if cfg.loss == "softmax":
                loss = objectives.erm_softmax_loss(users, items, batch, cfg.tau, exclude)
            elif cfg.loss == "bpr":
                loss = ops.scale(objectives.bpr_loss(users, items, triples), 1.0 / len(batch))
            else:
                loss = objectives.pointwise_loss(users, items, triples)
            losses.append(loss)
            reps.append((users, items))
        return losses, reps

    def objective(self, tensors, pairs, step, deltas):
        cfg = self.config
        losses, reps = self.env_losses(tensors, pairs, step, deltas)
        breakdown = objectives.invariance_objective(losses, cfg.penalty)
        total = breakdown.total
        if cfg.reg:
            for name in EMBEDDINGS:
                total = ops.add(total, ops.scale(ops.sum_squares(tensors[name]), cfg.reg))
        if cfg.hsic_weight and not cfg.no_env_gen:
            # dependence between denoised (environment-mean) and observed-graph user reps
            users = np.unique(np.asarray(pairs)[:, 0])
            if users.size >= 2:
                denoised = ops.scale(_sum([ops.take_rows(u, users, unique=True) for u, _ in reps]), 1.0 / len(reps))
                full, _ = encode(self.layout, np.ones(len(self.social)), tensors["user_embedding"],
                                 tensors["item_embedding"], cfg.layers)
                hsic = objectives.hsic_rbf(denoised, ops.take_rows(full, users, unique=True), cfg.hsic_sigma)
                total = ops.add(total, ops.scale(hsic, cfg.hsic_weight))
        return breakdown, total

    # ----------------------------------------------------------- updates

    def descent_step(self, pairs: np.ndarray, step: int, deltas) -> objectives.LossBreakdown:
        tape = Tape()
        tensors = {name: tape.param(v, name) for name, v in self.state.params.items()}
        breakdown, total = self.objective(tensors, pairs, step, deltas)
        if not np.isfinite(value_of(total)):
            raise NumericalError(f"non-finite loss at step {step}")
        tape.backward(total)
        adam_step(self.state.descent, self.state.params, tape.grads())
        return breakdown

    def variance_gradients(self, pairs: np.ndarray, step: int, deltas) -> tuple[float, dict]:
        tape = Tape()
        tensors = {name: (tape.param(v, name) if is_generator(name) else v)
                   for name, v in self.state.params.items()}
        losses, _ = self.env_losses(tensors, pairs, step, deltas)
        var = ops.variance(ops.stack(losses))
        grads = {name: np.zeros_like(v) for name, v in self.state.params.items() if is_generator(name)}
        if hasattr(var, "tape"):
            tape.backward(var)
            grads.update(tape.grads())
        return float(value_of(var)), grads

    def train_step(self, pairs: np.ndarray) -> objectives.LossBreakdown:
        cfg = self.config
        self.state.step += 1
        step = self.state.step
        deltas = self.step_noise(step)
        breakdown = self.descent_step(pairs, step, deltas)
        if cfg.explores and step % cfg.adv_period == 0:
            _, grads = self.variance_gradients(pairs, step, deltas)
            adversarial_step(self.state.ascent, self.state.params, grads)
        return breakdown

    # ------------------------------------------------------------- loops

    def batches(self, epoch: int):
        train = self.store.train
        perm = stream(self.config.seed, "shuffle", epoch).permutation(len(train))
        for s in range(0, len(train), self.config.batch_size):
            yield train[perm[s:s + self.config.batch_size]]

    def run_epoch(self) -> None:
        self.state.epoch += 1
        epoch = self.state.epoch
        for pairs in self.batches(epoch):
            t0 = time.perf_counter()
            breakdown = self.train_step(pairs)
            row = [self.state.step, epoch] + breakdown.row()
            self.loss_rows.append(row)
            self._append_log(row, time.perf_counter() - t0)

    def evaluate(self, split: str | None = None) -> EvalReport:
        split = split or self.config.monitor
        users, items = infer_embeddings(self.state, self.store, self.social, self.layout)
        return evaluate_embeddings(users, items, self.store, split, self.config.cutoffs, threads=self.threads)

    def fit(self, max_epochs: int | None = None) -> Checkpoint:
        """Train with early stopping; returns the best checkpoint."""
        cfg = self.config
        max_epochs = cfg.max_epochs if max_epochs is None else max_epochs
        if self.best is None:
            self.best = self.state.copy()
        stale = self.state.epoch - self.state.best_epoch
        while self.state.epoch < max_epochs and stale < cfg.patience:
            try:
                self.run_epoch()
            except NumericalError:
                log.error("numerical failure at epoch %d; keeping last good checkpoint", self.state.epoch)
                raise
            report = self.evaluate()
            value = report.metric(cfg.monitor_metric)
            metrics = {f"recall@{c}": report.recall[c] for c in cfg.cutoffs}
            metrics.update({f"ndcg@{c}": report.ndcg[c] for c in cfg.cutoffs})
            self.state.history.append({"epoch": self.state.epoch, **metrics})
            if value > self.state.best_metric:
                self.state.best_metric = value
                self.state.best_epoch = self.state.epoch
                self.state.best_metrics = metrics
                self.best = self.state.copy()
                if self.log_dir:
                    self.best.save(self.log_dir / "best")
            if self.log_dir:
                self.state.save(self.log_dir / "last")
            log.info("epoch %d %s=%.5f best=%.5f", self.state.epoch, cfg.monitor_metric, value, self.state.best_metric)
            stale = self.state.epoch - self.state.best_epoch
        self.best.history = list(self.state.history)
        return self.best

    def _append_log(self, row, seconds: float) -> None:
        if self.log_dir is None:
            return
        self.log_dir.mkdir(parents=True, exist_ok=True)
        path = self.log_dir / "loss_log.csv"
        if not path.exists():
            k = self.config.envs
            head = ["step", "epoch"] + [f"L_{i + 1}" for i in range(k)] + ["mean", "variance", "total"]
            path.write_text(",".join(head) + "\n", encoding="utf-8")
            (self.log_dir / "timing.csv").write_text("step,wall_time\n", encoding="utf-8")
        with path.open("a", encoding="utf-8") as fh:
            fh.write(",".join(str(v) if isinstance(v, int) else repr(v) for v in row) + "\n")
        with (self.log_dir / "timing.csv").open("a", encoding="utf-8") as fh:
            fh.write(f"{row[0]},{seconds:.6f}\n")


def environment_weights(config: TrainConfig, social: SocialGraph, layout: HeteroLayout, tensors, deltas) -> list:
    """Per-environment social weight vectors (tracked when ``tensors`` are)."""
    if config.no_env_gen:
        return [np.ones(len(social))]
    if config.generator_input == "table":
        gen_in = tensors["user_embedding"]
    else:
        gen_in, _ = encode(layout, np.ones(len(social)), tensors["user_embedding"], tensors["item_embedding"],
                           config.layers)
    return [
        sample_environment(generator_params(tensors, k), gen_in, social, config.temperature, config.bias,
                           delta=deltas[k], activation=config.activation).weights
        for k in range(config.envs)
    ]


def _sum(xs):
    acc = xs[0]
    for x in xs[1:]:
        acc = ops.add(acc, x)
    return acc


def adversarial_step(state: AdamState, params: dict, variance_grads: dict) -> None:
    """Ascend the environment-loss variance on generator parameters only."""
    grads = {name: -g for name, g in variance_grads.items() if is_generator(name)}
    adam_step(state, params, grads)


def train(config: TrainConfig, store: InteractionStore, social: SocialGraph, log_dir=None,
          threads: int = 1) -> Checkpoint:
    return Trainer(config, store, social, log_dir=log_dir, threads=threads).fit()


def resume(checkpoint: Checkpoint, store: InteractionStore, social: SocialGraph, log_dir=None,
           threads: int = 1) -> Trainer:
    return Trainer(checkpoint.config, store, social, checkpoint=checkpoint.copy(), log_dir=log_dir, threads=threads)


# ---------------------------------------------------------------- inference

def environment_embeddings(checkpoint: Checkpoint, store: InteractionStore, social: SocialGraph,
                           layout: HeteroLayout | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
    """Propagated (users, items) per environment, sampled with the fixed evaluation noise."""
    cfg = checkpoint.config
    layout = layout or hetero_layout(social, store.train, store.num_users, store.num_items)
    deltas = [None] if cfg.no_env_gen else env_noise(cfg.seed, cfg.envs, len(social), 0, "eval-noise")
    out = []
    for w in environment_weights(cfg, social, layout, checkpoint.params, deltas):
        out.append(encode(layout, w, checkpoint.params["user_embedding"], checkpoint.params["item_embedding"],
                          cfg.layers))
    return out


def infer_embeddings(checkpoint: Checkpoint, store: InteractionStore, social: SocialGraph,
                     layout: HeteroLayout | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Environment-mean user and item representations."""
    envs = environment_embeddings(checkpoint, store, social, layout)
    users = sum(u for u, _ in envs) / len(envs)
    items = sum(i for _, i in envs) / len(envs)
    return users, items


def infer_scores(checkpoint: Checkpoint, store: InteractionStore, social: SocialGraph, users) -> np.ndarray:
    """Inner-product scores for the queried users; their train items are set to ``-inf``."""
    u_emb, i_emb = infer_embeddings(checkpoint, store, social)
    users = np.asarray(users, dtype=np.int64)
    scores = u_emb[users] @ i_emb.T
    train = store.items_by_user("train")
    for row, u in enumerate(users.tolist()):
        scores[row, train[u]] = -np.inf
    return scores


__all__ = [
    "Checkpoint",
    "Trainer",
    "adversarial_step",
    "backbone_config",
    "environment_embeddings",
    "infer_embeddings",
    "infer_scores",
    "init_params",
    "resume",
    "train",
]
