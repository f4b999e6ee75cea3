"""Adam training with early stopping on validation macro-F1, plus evaluation."""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import augment as aug
from . import tensor as tt
from .data import Dataset
from .metrics import MetricsReport, aggregate, classification_metrics, f1_macro
from .model import TeChConfig, build_model

log = logging.getLogger(__name__)

LOG_FIELDS = ("epoch", "train_loss", "val_f1", "lr", "elapsed_ms")


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(state: AdamState, params: list[tt.Tensor], grads: list[np.ndarray]) -> None:
    """Bias-corrected Adam update, in place on ``params``."""
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} params but {len(grads)} grads")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise tt.ShapeError(f"grad shape {g.shape} does not match param {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    seeds: tuple[int, ...] = (42, 43, 44, 45, 46)
    augment: bool = False
    augmentations: tuple[str, ...] = aug.AUGMENTATIONS

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        self.augmentations = tuple(self.augmentations)
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be positive")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")


@dataclass
class TrainResult:
    model: object
    best_state: dict[str, np.ndarray]
    best_val_f1: float
    best_epoch: int
    log: list[dict]

    def write_log(self, path) -> None:
        write_log_csv(path, self.log)


def write_log_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow(row)


def predict_proba(model, ds: Dataset, batch_size: int = 256) -> np.ndarray:
    """Softmax class scores, evaluated without dropout or augmentation."""
    X = ds.X
    out = []
    for i in range(0, len(X), batch_size):
        logits = model.forward_batch(X[i:i + batch_size], training=False).data
        z = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        out.append(e / e.sum(axis=1, keepdims=True))
    return np.concatenate(out) if out else np.zeros((0, ds.K))


def train(model, train_set: Dataset, val_set: Dataset, cfg: TrainConfig, seed: int) -> TrainResult:
    """Train ``model`` in place and restore its best-validation-F1 parameters."""
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("train and validation splits must be non-empty")
    overlap = set(train_set.subject_ids()) & set(val_set.subject_ids())
    if overlap:
        raise ValueError(f"train/val share subjects {sorted(overlap)}")
    rng = np.random.default_rng([seed, 1])  # model init uses plain `seed`
    bank = aug.AugmentBank(enabled=cfg.augmentations) if cfg.augment else None
    params = model.parameters()
    opt = AdamState(lr=cfg.lr)
    X, y = train_set.X, train_set.y
    k = train_set.K
    best_f1, best_epoch, best_state = -1.0, 0, model.state_dict()
    since_best = 0
    rows = []
    t0 = time.perf_counter()
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(X))
        losses = []
        for i in range(0, len(order), cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            xb = X[idx]
            if bank is not None:
                xb = np.stack([aug.apply(bank, x, rng) for x in xb])
            loss = tt.softmax_cross_entropy(model.forward_batch(xb, training=True, rng=rng), y[idx])
            lv = float(loss.data)
            if not math.isfinite(lv):
                raise TrainingDiverged(f"non-finite loss {lv} at epoch {epoch}, batch {i // cfg.batch_size}")
            for p in params:
                p.zero_grad()
            tt.backward(loss)
            adam_step(opt, params, [p.grad for p in params])
            losses.append(lv * len(idx))
        val_pred = predict_proba(model, val_set).argmax(axis=1)
        val_f1 = f1_macro(val_set.y, val_pred, k)
        rows.append({"epoch": epoch, "train_loss": sum(losses) / len(X), "val_f1": val_f1,
                     "lr": cfg.lr, "elapsed_ms": round(1000 * (time.perf_counter() - t0), 3)})
        log.debug("epoch %d loss %.5f val_f1 %.4f", epoch, rows[-1]["train_loss"], val_f1)
        if val_f1 > best_f1:
            best_f1, best_epoch, best_state = val_f1, epoch, model.state_dict()
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    model.load_state_dict(best_state)
    return TrainResult(model, best_state, best_f1, best_epoch, rows)


def evaluate(model, split: Dataset, seed: int = 0) -> MetricsReport:
    if len(split) == 0:
        raise ValueError("cannot evaluate on an empty split")
    return MetricsReport.single(seed, classification_metrics(split.y, predict_proba(model, split)))


def _run_seed(args):
    model_cfg, kind, train_cfg, splits, seed = args
    train_set, val_set, test_set = splits
    model = build_model(model_cfg, seed, kind)
    result = train(model, train_set, val_set, train_cfg, seed)
    return seed, evaluate(model, test_set, seed), result


def train_seeds(model_cfg: TeChConfig, train_cfg: TrainConfig, splits, kind: str = "tech",
                n_jobs: int = 1):
    """Train one model per configured seed; returns (aggregate report, per-seed results).

    Each seed initializes its own model and generator, so runs are
    independent and may execute in separate processes.
    """
    jobs = [(model_cfg, kind, train_cfg, splits, s) for s in train_cfg.seeds]
    if n_jobs > 1:
        with ProcessPoolExecutor(n_jobs) as ex:
            done = list(ex.map(_run_seed, jobs))
    else:
        done = [_run_seed(j) for j in jobs]
    return aggregate([r for _, r, _ in done]), [res for _, _, res in done]
