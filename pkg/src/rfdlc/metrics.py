"""Evaluation: region accuracy, False Head Rate, misprediction rates, ECE, AUROC."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np
from scipy.stats import rankdata

from rfdlc.data import region_split, tail_set
from rfdlc.errors import DataError, UndefinedRateError

DEFAULT_TAIL_RATIOS = (0.25, 0.5, 0.75)
DEFAULT_ECE_BINS = 15


def _pair(preds, labels):
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape or preds.ndim != 1:
        raise DataError(f"preds and labels must be 1-D of equal length, got {preds.shape} and {labels.shape}")
    return preds, labels


def misprediction_rate(preds, labels, true_set: Iterable[int], decision_set: Iterable[int]) -> float:
    """Fraction of samples labelled in ``true_set`` that are predicted in ``decision_set``."""
    preds, labels = _pair(preds, labels)
    in_true = np.isin(labels, list(true_set))
    denom = int(in_true.sum())
    if denom == 0:
        raise UndefinedRateError("no samples carry a label from the denominator set")
    return int(np.isin(preds[in_true], list(decision_set)).sum()) / denom


def false_head_rate(preds, labels, tail: Iterable[int]) -> float:
    tail = np.asarray(list(tail))
    if tail.size == 0:
        raise DataError("tail set must be non-empty")
    preds, labels = _pair(preds, labels)
    g_tail = np.isin(labels, tail)
    denom = int(g_tail.sum())
    if denom == 0:
        raise UndefinedRateError("no tail-labelled samples; FHR is undefined")
    return int((~np.isin(preds[g_tail], tail)).sum()) / denom


def ece(confidences, correct, num_bins: int = DEFAULT_ECE_BINS) -> float:
    """Expected calibration error over equal-width bins on (0, 1]."""
    conf = np.asarray(confidences, dtype=np.float64)
    hit = np.asarray(correct, dtype=np.float64)
    if num_bins < 1:
        raise DataError("num_bins must be >= 1")
    if conf.size == 0:
        raise UndefinedRateError("ECE of an empty sample")
    edges = np.arange(num_bins + 1) / num_bins  # exact b/B edges
    # bin b covers (edges[b], edges[b+1]]; a confidence of exactly 0 joins the first bin
    bins = np.clip(np.searchsorted(edges, conf, side="left") - 1, 0, num_bins - 1)
    sizes = np.bincount(bins, minlength=num_bins)
    conf_sum = np.bincount(bins, weights=conf, minlength=num_bins)
    hit_sum = np.bincount(bins, weights=hit, minlength=num_bins)
    return float(np.abs(conf_sum - hit_sum).sum() / conf.size)


def auroc(scores, positive) -> float:
    """P(score of a random positive > score of a random negative), ties count 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positive, dtype=bool)
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedRateError("AUROC needs both positive and negative samples")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _accuracy_or_none(preds, labels, classes) -> float | None:
    mask = np.isin(labels, classes)
    if not mask.any():
        return None
    return int((preds[mask] == labels[mask]).sum()) / int(mask.sum())


def region_accuracy(preds, labels, regions) -> tuple[float, float | None, float | None, float | None]:
    """Overall accuracy plus accuracy on each of the (head, med, tail) class sets."""
    preds, labels = _pair(preds, labels)
    if labels.size == 0:
        raise UndefinedRateError("accuracy of an empty sample")
    overall = int((preds == labels).sum()) / labels.size
    return (overall, *(_accuracy_or_none(preds, labels, r) for r in regions))


@dataclass
class EvalReport:
    n: int
    acc: float
    acc_head: float | None
    acc_med: float | None
    acc_tail: float | None
    fhr_at: dict[float, float | None]
    ece: float
    auroc: float | None
    custom_rates: dict[str, float | None] = field(default_factory=dict)
    auroc_score: str = "entropy"
    ece_bins: int = DEFAULT_ECE_BINS
    region_rule: str = "floor(K/3), floor(K/3), remainder to tail"

    @property
    def fhr_avg(self) -> float | None:
        vals = list(self.fhr_at.values())
        return None if any(v is None for v in vals) else float(np.mean(vals))

    def to_tree(self) -> dict:
        doc = asdict(self)
        doc["fhr_at"] = {f"{k:g}": v for k, v in self.fhr_at.items()}
        doc["fhr_avg"] = self.fhr_avg
        return doc

    def csv_columns(self) -> list[str]:
        cols = ["n", "acc", "acc_head", "acc_med", "acc_tail"]
        cols += [f"fhr@{k:g}" for k in self.fhr_at] + ["fhr_avg", "ece", "auroc"]
        return cols + [f"rate:{name}" for name in self.custom_rates]

    def csv_row(self) -> list:
        row = [self.n, self.acc, self.acc_head, self.acc_med, self.acc_tail]
        row += list(self.fhr_at.values()) + [self.fhr_avg, self.ece, self.auroc]
        return row + list(self.custom_rates.values())


def _maybe(fn, *args):
    try:
        return fn(*args)
    except UndefinedRateError:
        return None


def evaluate(preds, labels, probs, num_classes: int, tail_ratios=DEFAULT_TAIL_RATIOS,
             custom: dict[str, tuple[Iterable[int], Iterable[int]]] | None = None,
             ece_bins: int = DEFAULT_ECE_BINS, auroc_score: str = "entropy") -> EvalReport:
    """Full report. ``probs`` is the N x K predictive distribution.

    AUROC treats misclassified samples as positives, scored by predictive
    entropy (or by ``1 - max prob`` with ``auroc_score="max_prob"``).
    """
    preds, labels = _pair(preds, labels)
    probs = np.asarray(probs, dtype=np.float64)
    acc, head, med, tail = region_accuracy(preds, labels, region_split(num_classes))
    fhr = {float(r): _maybe(false_head_rate, preds, labels, tail_set(num_classes, r)) for r in tail_ratios}
    conf = probs.max(axis=1)
    correct = preds == labels
    if auroc_score == "entropy":
        with np.errstate(divide="ignore", invalid="ignore"):
            score = -np.where(probs > 0, probs * np.log(probs), 0.0).sum(axis=1)
    elif auroc_score == "max_prob":
        score = 1.0 - conf
    else:
        raise DataError(f"unknown AUROC score {auroc_score!r}")
    rates = {name: _maybe(misprediction_rate, preds, labels, t, d) for name, (t, d) in (custom or {}).items()}
    return EvalReport(
        n=int(labels.size), acc=acc, acc_head=head, acc_med=med, acc_tail=tail, fhr_at=fhr,
        ece=ece(conf, correct, ece_bins), auroc=_maybe(auroc, score, ~correct),
        custom_rates=rates, auroc_score=auroc_score, ece_bins=ece_bins,
    )
