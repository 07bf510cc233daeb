"""Reweighted BPR training.

A user's share of each epoch is set by a sampling budget proportional to
``d_u ** alpha``; each sampled positive is weighted by ``d_i ** beta``.
``(alpha, beta) = (1, 0)`` is plain BPR in expectation, ``(0, 0)`` samples
every user equally, and ``beta < 0`` upweights interactions with niche items.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .interactions import InteractionDataset
from ._kernels import adam_update
from .recmodels import EmbeddingModel, ScoreView, add_l2_grad, bpr_terms, l2_penalty, neg_log_sigmoid, save_checkpoint

logger = logging.getLogger(__name__)


class Variant(str, enum.Enum):
    VANILLA = "vanilla"
    UI = "ui"
    ONLY_ITEM = "only_item"
    ONLY_USER = "only_user"


# (alpha, beta) pinned by each fixed variant; UI takes them from the config.
FIXED_WEIGHTS = {
    Variant.VANILLA: (0.0, 0.0),
    Variant.ONLY_ITEM: (0.0, -0.5),
    Variant.ONLY_USER: (1.0, 0.0),
}


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class ReweightConfig:
    variant: Variant = Variant.UI
    alpha: float = 0.0
    beta: float = 0.0
    epochs: int = 400
    seed: int = 0
    lr: float = 1e-3
    batch_size: int = 2048
    optimizer: str = "adam"

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if self.variant in FIXED_WEIGHTS:
            pinned = FIXED_WEIGHTS[self.variant]
            if (self.alpha, self.beta) not in ((0.0, 0.0), pinned):
                raise ValueError(f"{self.variant.value} fixes (alpha, beta) = {pinned}")
            self.alpha, self.beta = pinned
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.beta > 0.0:
            raise ValueError("beta must be <= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    @classmethod
    def for_variant(cls, variant, alpha: float = 0.0, beta: float = 0.0, **kw) -> "ReweightConfig":
        return cls(variant=Variant(variant), alpha=alpha, beta=beta, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        return d


@dataclass
class SamplingPlan:
    S: np.ndarray

    @property
    def total(self) -> int:
        return int(self.S.sum())


def samples_per_user(ds: InteractionDataset, alpha: float) -> SamplingPlan:
    """Per-user triplet budget ``round(d_u^a / sum d^a * sum d)``, half away from zero."""
    return SamplingPlan(budget_from_degrees(ds.d_u, alpha))


def budget_from_degrees(degrees, alpha: float) -> np.ndarray:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    d = np.asarray(degrees, dtype=np.float64)
    if not (d > 0).any():
        raise ValueError("every user has zero degree")
    w = np.where(d > 0, d ** alpha, 0.0)
    raw = w / w.sum() * d.sum()
    S = np.floor(raw + 0.5).astype(np.int64)
    zeroed = int(((S == 0) & (d > 0)).sum())
    if zeroed:
        logger.info("%d users with interactions received a zero sampling budget", zeroed)
    return S


def _train_keys(ds: InteractionDataset) -> np.ndarray:
    return ds.train_edges[:, 0] * ds.m + ds.train_edges[:, 1]


def sample_negatives(ds: InteractionDataset, users: np.ndarray, rng: np.random.Generator,
                     keys: np.ndarray | None = None) -> np.ndarray:
    """One uniform non-interacted item per entry of ``users`` (rejection sampling)."""
    keys = _train_keys(ds) if keys is None else keys
    neg = rng.integers(0, ds.m, size=len(users))
    todo = np.arange(len(users))
    while todo.size:
        k = users[todo] * ds.m + neg[todo]
        pos = np.searchsorted(keys, k)
        hit = pos < len(keys)
        hit[hit] = keys[pos[hit]] == k[hit]
        todo = todo[hit]
        neg[todo] = rng.integers(0, ds.m, size=todo.size)
    return neg


def sample_triplets(ds: InteractionDataset, plan: SamplingPlan | None, rng, exhaustive: bool = False):
    """One epoch of shuffled triplets as ``(users, pos, neg)`` arrays.

    With a plan, user u contributes ``plan.S[u]`` triplets whose positives are
    drawn uniformly with replacement from N_u. ``exhaustive=True`` instead
    emits every train edge once (the full sum over positives).
    """
    rng = np.random.default_rng(rng)
    if exhaustive:
        users = ds.train_edges[:, 0].copy()
        pos = ds.train_edges[:, 1].copy()
    else:
        S = plan.S.copy()
        full = (ds.d_u >= ds.m) & (S > 0)
        if full.any():
            logger.warning("skipping %d users with no negative items", int(full.sum()))
            S[full] = 0
        S[ds.d_u == 0] = 0
        users = np.repeat(np.arange(ds.n), S)
        offs = np.floor(rng.random(len(users)) * ds.d_u[users]).astype(np.int64)
        pos = ds.train_items[ds.indptr[users] + offs]
    if exhaustive:
        keep = ds.d_u[users] < ds.m
        users, pos = users[keep], pos[keep]
    neg = sample_negatives(ds, users, rng)
    order = rng.permutation(len(users))
    return users[order], pos[order], neg[order]


def triplet_weights(cfg: ReweightConfig, ds: InteractionDataset, users, pos) -> np.ndarray:
    if cfg.variant is Variant.ONLY_USER:
        return 1.0 / ds.d_u[users]
    if cfg.beta == 0.0:
        return np.ones(len(pos))
    return ds.d_i[pos].astype(np.float64) ** cfg.beta


def triplet_loss(cfg: ReweightConfig, ds: InteractionDataset, scores: ScoreView, u: int, i: int, j: int) -> float:
    w = triplet_weights(cfg, ds, np.array([u]), np.array([i]))[0]
    return float(w * neg_log_sigmoid(scores.score(u, i) - scores.score(u, j)))


def epoch_plan(cfg: ReweightConfig, ds: InteractionDataset) -> SamplingPlan | None:
    if cfg.variant is Variant.ONLY_USER:
        return None
    return samples_per_user(ds, cfg.alpha)


def epoch_triplet_losses(cfg: ReweightConfig, ds: InteractionDataset, model: EmbeddingModel, rng,
                         plan: SamplingPlan | None = None):
    """Per-triplet weighted losses of one freshly sampled epoch (model frozen)."""
    plan = plan if plan is not None else epoch_plan(cfg, ds)
    users, pos, neg = sample_triplets(ds, plan, rng, exhaustive=cfg.variant is Variant.ONLY_USER)
    view = ScoreView(model)
    w = triplet_weights(cfg, ds, users, pos)
    losses = w * neg_log_sigmoid(view.score(users, pos) - view.score(users, neg))
    return losses, (users, pos, neg)


def epoch_loss_estimate(cfg: ReweightConfig, ds: InteractionDataset, model: EmbeddingModel, rng=None) -> float:
    """Mean sampled triplet loss plus the per-triplet L2 term for one epoch."""
    losses, (users, pos, neg) = epoch_triplet_losses(cfg, ds, model, rng)
    if len(losses) == 0:
        return 0.0
    reg = l2_penalty(model, users, np.concatenate([pos, neg])) / len(losses)
    return float(losses.mean() + reg)


class Adam:
    def __init__(self, shapes, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            adam_update(p, g, m, v, self.lr, self.b1, self.b2, self.eps, c1, c2)


class SGD:
    def __init__(self, shapes, lr=1e-3):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    reg_loss: float
    wallclock_s: float


@dataclass
class TrainResult:
    model: EmbeddingModel
    trace: list[EpochStats] = field(default_factory=list)


def train(cfg: ReweightConfig, ds: InteractionDataset, model: EmbeddingModel,
          checkpoint_dir=None, checkpoint_every: int = 0, callback=None) -> TrainResult:
    """Mini-batch optimization of the reweighted BPR objective.

    The model is updated in place. Batch loss is the mean weighted triplet
    loss plus ``l2_penalty`` over the batch ids divided by the batch size.
    """
    if model.graph is None and model.kind == "lgn":
        model.attach(ds)
    rng = np.random.default_rng(cfg.seed)
    params = [model.user_emb, model.item_emb]
    opt_cls = Adam if cfg.optimizer == "adam" else SGD
    opt = opt_cls([p.shape for p in params], lr=cfg.lr)
    plan = epoch_plan(cfg, ds)
    exhaustive = cfg.variant is Variant.ONLY_USER
    result = TrainResult(model)
    start = time.perf_counter()

    for epoch in range(1, cfg.epochs + 1):
        users, pos, neg = sample_triplets(ds, plan, rng, exhaustive=exhaustive)
        weights = triplet_weights(cfg, ds, users, pos)
        loss_sum = reg_sum = 0.0
        for lo in range(0, len(users), cfg.batch_size):
            sl = slice(lo, lo + cfg.batch_size)
            bu, bi, bj, bw = users[sl], pos[sl], neg[sl], weights[sl]
            size = len(bu)
            losses, gu, gv = bpr_terms(model, bu, bi, bj, bw)
            items = np.concatenate([bi, bj])
            reg = l2_penalty(model, bu, items)
            add_l2_grad(model, bu, items, gu, gv)
            batch_loss = losses.sum() / size
            if not np.isfinite(batch_loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}; try a smaller learning rate than {cfg.lr}")
            gu /= size
            gv /= size
            opt.step(params, [gu, gv])
            loss_sum += losses.sum()
            reg_sum += reg
        count = max(len(users), 1)
        stats = EpochStats(epoch, loss_sum / count, reg_sum / count, time.perf_counter() - start)
        result.trace.append(stats)
        if not model.finite():
            raise TrainingDiverged(f"non-finite embeddings after epoch {epoch}; lower the learning rate")
        if checkpoint_dir and checkpoint_every and epoch % checkpoint_every == 0:
            save_checkpoint(model, Path(checkpoint_dir) / f"epoch{epoch:04d}", cfg.seed, epoch)
        if callback is not None:
            callback(stats)
    return result


def write_loss_csv(trace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,mean_loss,reg_loss,wallclock_s\n")
        for s in trace:
            fh.write(f"{s.epoch},{s.mean_loss!r},{s.reg_loss!r},{s.wallclock_s:.3f}\n")
