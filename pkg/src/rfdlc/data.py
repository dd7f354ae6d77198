"""Datasets, long-tail construction, class statistics and importance weights."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from rfdlc.errors import (
    ConfigError,
    DataError,
    InfeasibleImbalanceError,
    InvalidDimensionError,
    SingularWeightError,
)
from rfdlc.treeio import dump_tree, load_tree, read_csv_rows, write_csv

WEIGHT_FORMS = ("linear", "effective_number", "sqrt", "log", "constant")
DEFAULT_BETA = 0.9995


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = "dataset"

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64)
        y = np.array(self.labels)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise DataError(f"features must be a non-empty N x D matrix, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise DataError(f"expected {x.shape[0]} labels, got shape {y.shape}")
        if not np.all(np.isfinite(x)):
            raise DataError("features contain non-finite values")
        if y.size and not np.all(np.equal(np.mod(y, 1), 0)):
            raise DataError("labels must be integers")
        y = y.astype(np.int64)
        if self.num_classes < 2 or y.min() < 0 or y.max() >= self.num_classes:
            raise DataError(f"labels must lie in [0, {self.num_classes})")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx, name: str | None = None) -> "LabeledDataset":
        return LabeledDataset(self.features[idx], self.labels[idx], self.num_classes, name or self.name)


@dataclass(frozen=True)
class WeightForm:
    form: str = "linear"
    beta: float | None = None

    def __post_init__(self):
        if self.form not in WEIGHT_FORMS:
            raise ConfigError(f"unknown weight form {self.form!r}; choose from {WEIGHT_FORMS}")
        if self.form == "effective_number":
            if self.beta is None:
                object.__setattr__(self, "beta", DEFAULT_BETA)
            if not 0.0 < self.beta < 1.0:
                raise ConfigError(f"beta must lie in (0, 1), got {self.beta}")
        elif self.beta is not None:
            raise ConfigError("beta is only meaningful for the effective_number form")


def synth_gaussian_mixture(k: int, d: int, per_class: int, separation: float, seed: int,
                           name: str = "gmm", max_tries: int = 2000) -> LabeledDataset:
    """Balanced isotropic unit-variance Gaussian classes.

    Means lie on a sphere of radius ``separation`` and are placed greedily by
    rejection so that every pair is at least ``separation`` apart.
    """
    if k < 2 or per_class < 2 or separation <= 0 or d < 1:
        raise ConfigError("need k >= 2, per_class >= 2, d >= 1 and separation > 0")
    rng = np.random.default_rng(seed)
    means = []
    for _ in range(k):
        for _ in range(max_tries):
            v = rng.standard_normal(d)
            v *= separation / np.linalg.norm(v)
            if all(np.linalg.norm(v - m) >= separation for m in means):
                means.append(v)
                break
        else:
            raise ConfigError(f"cannot place {k} means {separation} apart in {d} dimensions")
    means = np.array(means)
    labels = np.repeat(np.arange(k), per_class)
    features = means[labels] + rng.standard_normal((k * per_class, d))
    return LabeledDataset(features, labels, k, name)


def class_counts(ds: LabeledDataset) -> np.ndarray:
    return np.bincount(ds.labels, minlength=ds.num_classes)


def long_tail_profile(n: int, k: int, rho: float) -> np.ndarray:
    """n_k = round(n * rho^(-k/(K-1))), half-up rounding."""
    if rho < 1:
        raise ConfigError(f"imbalance ratio must be >= 1, got {rho}")
    if rho > n:
        raise InfeasibleImbalanceError(f"rho={rho} exceeds per-class count {n}")
    exps = np.arange(k) / (k - 1)
    return np.floor(n * rho ** (-exps) + 0.5).astype(np.int64)


def make_long_tailed(ds: LabeledDataset, rho: float, seed: int) -> LabeledDataset:
    counts = class_counts(ds)
    n = int(counts[0])
    if not np.all(counts == n):
        raise DataError(f"long-tail construction needs a balanced input, got counts {counts}")
    keep = long_tail_profile(n, ds.num_classes, rho)
    rng = np.random.default_rng(seed)
    idx = []
    for c in range(ds.num_classes):
        members = np.flatnonzero(ds.labels == c)
        idx.append(np.sort(rng.choice(members, size=keep[c], replace=False)))
    out = ds.subset(np.concatenate(idx), name=f"{ds.name}-lt{rho:g}")
    return sort_by_frequency(out)[0]


def sort_by_frequency(ds: LabeledDataset) -> tuple[LabeledDataset, np.ndarray]:
    """Relabel so class 0 is the most frequent; ties keep their original order.

    Returns the relabelled dataset and ``old_to_new`` so other splits can follow.
    """
    counts = class_counts(ds)
    order = np.argsort(-counts, kind="stable")
    old_to_new = np.empty_like(order)
    old_to_new[order] = np.arange(order.size)
    return LabeledDataset(ds.features, old_to_new[ds.labels], ds.num_classes, ds.name), old_to_new


def relabel(ds: LabeledDataset, old_to_new: np.ndarray) -> LabeledDataset:
    return LabeledDataset(ds.features, np.asarray(old_to_new)[ds.labels], ds.num_classes, ds.name)


def split_per_class(ds: LabeledDataset, first_per_class: int, seed: int):
    """Randomly take ``first_per_class`` rows of every class into a first split."""
    rng = np.random.default_rng(seed)
    first, rest = [], []
    for c in range(ds.num_classes):
        members = rng.permutation(np.flatnonzero(ds.labels == c))
        if members.size <= first_per_class:
            raise ConfigError(f"class {c} has only {members.size} samples")
        first.append(members[:first_per_class])
        rest.append(members[first_per_class:])
    return ds.subset(np.sort(np.concatenate(first))), ds.subset(np.sort(np.concatenate(rest)))


def importance_weight(form: WeightForm, n_y) -> float | np.ndarray:
    """1 / f(n_y) for the chosen form of f."""
    n = np.asarray(n_y, dtype=np.float64)
    if np.any(n < 1):
        raise InvalidDimensionError("class counts must be >= 1")
    if form.form == "linear":
        f = n
    elif form.form == "effective_number":
        f = (1.0 - form.beta ** n) / (1.0 - form.beta)
    elif form.form == "sqrt":
        f = np.sqrt(n)
    elif form.form == "log":
        if np.any(n == 1):
            raise SingularWeightError("log form is singular at n_y = 1")
        f = np.log(n)
    else:
        f = np.ones_like(n)
    w = 1.0 / f
    return float(w) if w.ndim == 0 else w


def region_split(k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Head / med / tail class indices; sizes floor(K/3), floor(K/3), remainder."""
    if k < 3:
        raise InvalidDimensionError(f"region split needs K >= 3, got {k}")
    third = k // 3
    idx = np.arange(k)
    return idx[:third], idx[third:2 * third], idx[2 * third:]


def tail_set(k: int, ratio: float) -> np.ndarray:
    """The last ceil(K * ratio) classes."""
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"tail ratio must lie in (0, 1), got {ratio}")
    size = math.ceil(round(k * ratio, 9))
    return np.arange(k - size, k)


def save_csv(ds: LabeledDataset, path: str | Path, seed: int | None = None) -> None:
    cols = [f"x{i}" for i in range(ds.dim)] + ["label"]
    rows = ([*map(float, x), int(y)] for x, y in zip(ds.features, ds.labels))
    write_csv(path, cols, rows, seed=seed)


def load_csv(path: str | Path, num_classes: int | None = None, name: str | None = None) -> LabeledDataset:
    """Header row, feature columns, final integer label column."""
    try:
        header, rows = read_csv_rows(path)
    except (OSError, StopIteration) as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from None
    if len(header) < 2 or not rows:
        raise DataError(f"{path}: need at least one feature column, a label column and one row")
    try:
        features = np.array([[float(v) for v in row[:-1]] for row in rows])
        labels = np.array([int(row[-1]) for row in rows])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    k = num_classes if num_classes is not None else int(labels.max()) + 1
    return LabeledDataset(features, labels, k, name or Path(path).stem)


def save_metadata(ds: LabeledDataset, path: str | Path, seed: int | None = None, **extra) -> None:
    doc = {"name": ds.name, "k": ds.num_classes, "n": len(ds), "counts": class_counts(ds).tolist()}
    doc.update(extra)
    dump_tree(doc, path, seed=seed)


def load_metadata(path: str | Path) -> dict:
    return load_tree(path)
