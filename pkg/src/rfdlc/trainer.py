"""Mini-batch SGD over all particles of the ensemble."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rfdlc.data import LabeledDataset
from rfdlc.errors import ConfigError, DivergenceError, NumericOverflowError
from rfdlc.model import MlpArchitecture, ParticleEnsemble, init_ensemble
from rfdlc.objective import ObjectiveConfig, anneal_weight, loss_and_gradient, particle_entropy
from rfdlc.treeio import write_csv

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "loss", "acc", "repulsive_value", "anneal_weight")


@dataclass(frozen=True)
class TrainConfig:
    objective: ObjectiveConfig
    hidden: tuple[int, ...] = (32,)
    num_particles: int = 3
    shared_trunk_layers: int = 0
    learning_rate: float = 0.05
    epochs: int = 100
    batch_size: int = 128
    momentum: float = 0.9
    milestones: tuple[int, ...] | None = None
    gamma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise ConfigError("train.learning_rate must be >= 0")
        if self.epochs < 1:
            raise ConfigError("train.epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("train.batch_size must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("train.momentum must lie in [0, 1)")
        if self.num_particles < 1:
            raise ConfigError("arch.num_particles must be >= 1")
        if self.milestones is None:
            object.__setattr__(self, "milestones", default_milestones(self.epochs))
        ms = tuple(int(v) for v in self.milestones)
        object.__setattr__(self, "milestones", ms)
        if any(b <= a for a, b in zip(ms, ms[1:])) or any(not 0 < v < self.epochs for v in ms):
            raise ConfigError("train.milestones must be strictly increasing and inside (0, epochs)")

    def architecture(self, input_dim: int, num_classes: int) -> MlpArchitecture:
        return MlpArchitecture((input_dim, *self.hidden, num_classes), self.shared_trunk_layers)

    def lr_at(self, epoch: int) -> float:
        return self.learning_rate * self.gamma ** sum(epoch >= m for m in self.milestones)


def default_milestones(epochs: int) -> tuple[int, ...]:
    """Step decay at 60% and 80% of training."""
    ms = sorted({int(epochs * 0.6), int(epochs * 0.8)})
    return tuple(m for m in ms if 0 < m < epochs)


@dataclass
class TrainHistory:
    records: list[dict] = field(default_factory=list)

    def append(self, **rec):
        self.records.append(rec)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records])

    def __len__(self):
        return len(self.records)

    def save_csv(self, path: str | Path, seed: int | None = None) -> None:
        write_csv(path, HISTORY_COLUMNS, ([r[c] for c in HISTORY_COLUMNS] for r in self.records), seed=seed)


def ensemble_predict(ens: ParticleEnsemble, x: np.ndarray) -> np.ndarray:
    """Argmax of log-probabilities summed over particles."""
    return np.argmax(ens.log_probs(x).sum(axis=0), axis=-1)


def train(cfg: TrainConfig, train_ds: LabeledDataset, counts=None,
          init: ParticleEnsemble | None = None) -> tuple[ParticleEnsemble, TrainHistory]:
    k = train_ds.num_classes
    if cfg.objective.utility.num_classes != k:
        raise ConfigError(f"utility has K={cfg.objective.utility.num_classes} but data has K={k}")
    if cfg.batch_size > len(train_ds):
        raise ConfigError(f"batch_size {cfg.batch_size} exceeds dataset size {len(train_ds)}")
    if counts is None:
        counts = np.bincount(train_ds.labels, minlength=k)
    if init is None:
        ens = init_ensemble(cfg.architecture(train_ds.dim, k), cfg.num_particles, cfg.seed)
    else:
        ens = init.copy()
        if ens.arch.input_dim != train_ds.dim or ens.num_classes != k:
            raise ConfigError("initial ensemble does not match the dataset")

    x, y = train_ds.features, train_ds.labels
    n = len(train_ds)
    v_trunk = np.zeros_like(ens.trunk)
    v_heads = np.zeros_like(ens.heads)
    history = TrainHistory()
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng(cfg.seed ^ epoch)
        order = rng.permutation(n)
        lr = cfg.lr_at(epoch)
        total = 0.0
        batches = range(0, n, cfg.batch_size)
        for bi, start in enumerate(batches):
            idx = order[start:start + cfg.batch_size]
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    loss, g_trunk, g_heads, _ = loss_and_gradient(ens, (x[idx], y[idx]), counts, cfg.objective,
                                                                  epoch)
            except NumericOverflowError:
                raise DivergenceError(epoch, bi, math.nan) from None
            if not (math.isfinite(loss) and np.all(np.isfinite(g_heads)) and np.all(np.isfinite(g_trunk))):
                raise DivergenceError(epoch, bi, loss)
            total += loss
            v_trunk = cfg.momentum * v_trunk + g_trunk
            v_heads = cfg.momentum * v_heads + g_heads
            ens.trunk -= lr * v_trunk
            ens.heads -= lr * v_heads
        acc = float(np.mean(ensemble_predict(ens, x) == y))
        history.append(epoch=epoch, loss=total / len(batches), acc=acc,
                       repulsive_value=particle_entropy(ens, cfg.objective.epsilon_var),
                       anneal_weight=anneal_weight(epoch, cfg.objective.tau))
        log.debug("epoch %d loss %.5f acc %.4f", epoch, total / len(batches), acc)
    return ens, history
