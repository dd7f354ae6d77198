"""End-to-end runs: data preparation, training, evaluation and parameter sweeps."""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass

import numpy as np

from rfdlc import config as cfgmod
from rfdlc.data import (
    LabeledDataset,
    class_counts,
    load_csv,
    make_long_tailed,
    split_per_class,
    synth_gaussian_mixture,
)
from rfdlc.decision import decide_batch
from rfdlc.errors import ConfigError, DataError
from rfdlc.metrics import EvalReport, evaluate
from rfdlc.model import ParticleEnsemble, predictive_distribution
from rfdlc.trainer import TrainConfig, TrainHistory, train
from rfdlc.utility import UtilityMatrix

log = logging.getLogger(__name__)

SWEEP_AXES = {
    "utility_u": "objective.utility",
    "weight_form": "objective.weight_form",
    "lambda": "objective.lambda",
    "num_particles": "arch.num_particles",
}


def make_synthetic(k: int, d: int, per_class: int, separation: float, rho: float, seed: int,
                   test_per_class: int = 100) -> tuple[LabeledDataset, LabeledDataset]:
    """Long-tailed train split and balanced test split drawn from one mixture."""
    s_pool, s_split, s_tail = (int(v) for v in np.random.SeedSequence(seed).generate_state(3))
    pool = synth_gaussian_mixture(k, d, per_class + test_per_class, separation, s_pool, name="gmm")
    test, rest = split_per_class(pool, test_per_class, s_split)
    train_ds = make_long_tailed(rest, rho, s_tail)
    return (
        LabeledDataset(train_ds.features, train_ds.labels, k, f"gmm-k{k}-rho{rho:g}-train"),
        LabeledDataset(test.features, test.labels, k, f"gmm-k{k}-test"),
    )


def prepare_data(resolved: dict) -> tuple[LabeledDataset, LabeledDataset | None]:
    data = resolved["data"]
    syn = data["synthetic"]
    if syn is not None:
        return make_synthetic(syn["k"], syn["d"], syn["per_class"], syn["separation"], syn["rho"],
                              data["seed"], syn["test_per_class"])
    train_ds = load_csv(data["train_csv"])
    test_ds = None
    if data["test_csv"]:
        test_ds = load_csv(data["test_csv"], num_classes=train_ds.num_classes)
        if test_ds.dim != train_ds.dim:
            raise DataError("train and test feature dimensions differ")
    return train_ds, test_ds


def check_frequency_order(counts: np.ndarray, utility: UtilityMatrix) -> None:
    if utility.kind == "tail_sensitive" and np.any(np.diff(counts) > 0):
        raise DataError(f"tail-sensitive utility needs labels sorted by descending count, got {counts.tolist()}")


def evaluate_ensemble(ens: ParticleEnsemble, test_ds: LabeledDataset, utility: UtilityMatrix,
                      tail_ratios=(0.25, 0.5, 0.75), ece_bins: int = 15, auroc_score: str = "entropy",
                      custom=None) -> EvalReport:
    if test_ds.num_classes != ens.num_classes or utility.num_classes != ens.num_classes:
        raise ConfigError("checkpoint, utility and data disagree on the number of classes")
    if test_ds.dim != ens.arch.input_dim:
        raise ConfigError("test features do not match the checkpoint input dimension")
    preds = decide_batch(ens, test_ds.features, utility)
    probs, _ = predictive_distribution(ens, test_ds.features)
    return evaluate(preds, test_ds.labels, probs, ens.num_classes, tail_ratios, custom, ece_bins, auroc_score)


@dataclass
class RunResult:
    ensemble: ParticleEnsemble
    history: TrainHistory
    train_config: TrainConfig
    report: EvalReport | None
    counts: np.ndarray


def run(resolved: dict, data=None) -> RunResult:
    train_ds, test_ds = data if data is not None else prepare_data(resolved)
    counts = class_counts(train_ds)
    tcfg = cfgmod.build_train_config(resolved, counts)
    check_frequency_order(counts, tcfg.objective.utility)
    ens, hist = train(tcfg, train_ds, counts)
    report = None
    if test_ds is not None:
        ev = resolved["eval"]
        report = evaluate_ensemble(ens, test_ds, cfgmod.decision_utility(resolved, tcfg.objective.utility),
                                   ev["tail_ratios"], ev["ece_bins"], ev["auroc_score"])
    return RunResult(ens, hist, tcfg, report, counts)


def min_pairwise_distance(ens: ParticleEnsemble) -> float:
    """Smallest Euclidean distance between two particles (inf for one particle)."""
    p = ens.particles()
    best = np.inf
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            best = min(best, float(np.linalg.norm(p[i] - p[j])))
    return best


def apply_axis(doc: dict, axis: str, value) -> dict:
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    out = copy.deepcopy(doc)
    if axis == "utility_u":
        u = float(value)
        out.setdefault("objective", {})["utility"] = (
            {"kind": "one_hot"} if u == 0.0 else {"kind": "tail_sensitive", "u": u}
        )
    else:
        cfgmod.set_path(out, SWEEP_AXES[axis], value)
    return out


def sweep(base_doc: dict, axis: str, values, seeds=None):
    """Train and evaluate once per (value, seed); returns (columns, rows).

    Seeds set both the data seed and the training seed. Rows keep the order
    of ``values`` then ``seeds``.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    seeds = [None] if not seeds else list(seeds)
    columns, rows = None, []
    for value in values:
        for seed in seeds:
            doc = apply_axis(base_doc, axis, value)
            if seed is not None:
                cfgmod.set_path(doc, "data.seed", seed)
                cfgmod.set_path(doc, "train.seed", seed)
            resolved = cfgmod.resolve(doc)
            res = run(resolved)
            if res.report is None:
                raise ConfigError("sweep needs a test split (data.test_csv or data.synthetic)")
            if columns is None:
                columns = ["axis", "value", "seed"] + res.report.csv_columns() + ["min_particle_distance"]
            rows.append([axis, value, resolved["train"]["seed"], *res.report.csv_row(),
                         min_pairwise_distance(res.ensemble)])
            log.info("sweep %s=%s seed=%s acc=%.4f", axis, value, resolved["train"]["seed"], res.report.acc)
    return columns, rows
