"""Utility matrices and the logarithmic decision gain.

Rows index the true class ``y'`` and columns the decision ``d``, so
``values[i, j]`` is the utility of deciding ``j`` when the truth is ``i``.
Class 0 is the most frequent class.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from rfdlc.errors import (
    ConfigError,
    InvalidDimensionError,
    InvalidPenaltyError,
    NormalizationError,
    PenaltyConflictError,
)

KINDS = ("one_hot", "tail_sensitive", "penalized", "raw")
NORMALIZATION_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class UtilityMatrix:
    values: np.ndarray
    kind: str = "raw"
    u: float | None = None
    penalties: tuple[tuple[int, int, float], ...] = field(default=())

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] != vals.shape[1] or vals.shape[0] < 2:
            raise InvalidDimensionError(f"utility matrix must be square with side >= 2, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ConfigError("utility matrix has non-finite entries")
        if np.any(np.diag(vals) <= 0):
            raise ConfigError("utility matrix diagonal must be strictly positive")
        if self.kind not in KINDS:
            raise ConfigError(f"unknown utility kind {self.kind!r}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def num_classes(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, UtilityMatrix):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())

    def __add__(self, other: "UtilityMatrix") -> "UtilityMatrix":
        return UtilityMatrix(self.values + other.values)

    def scaled(self, factor: float) -> "UtilityMatrix":
        return UtilityMatrix(self.values * factor)

    def to_tree(self) -> dict:
        doc = {"k": self.num_classes, "kind": self.kind}
        if self.kind == "tail_sensitive":
            doc["u"] = float(self.u)
        if self.kind == "penalized":
            doc["penalties"] = [[int(i), int(j), float(v)] for i, j, v in self.penalties]
        doc["values"] = [float(v) for v in self.values.ravel()]
        return doc

    @classmethod
    def from_tree(cls, doc: dict) -> "UtilityMatrix":
        try:
            kind = doc.get("kind", "raw")
            k = int(doc["k"])
            if kind == "one_hot":
                return build_one_hot(k)
            if kind == "tail_sensitive":
                return build_tail_sensitive(k, float(doc["u"]))
            if kind == "penalized":
                return build_penalized(k, [(int(i), int(j), float(v)) for i, j, v in doc.get("penalties", [])])
            if kind == "raw":
                vals = np.array([float(v) for v in doc["values"]]).reshape(k, k)
                return cls(vals)
        except KeyError as exc:
            raise ConfigError(f"utility document missing field {exc.args[0]!r}") from None
        raise ConfigError(f"unknown utility kind {kind!r}")


def _check_k(k: int) -> int:
    if int(k) != k or k < 2:
        raise InvalidDimensionError(f"number of classes must be an integer >= 2, got {k}")
    return int(k)


def build_one_hot(k: int) -> UtilityMatrix:
    k = _check_k(k)
    return UtilityMatrix(np.eye(k), kind="one_hot")


def build_tail_sensitive(k: int, u: float = -1.0) -> UtilityMatrix:
    """Lower-triangular penalty ``u`` for deciding a head class when the truth is tailer."""
    k = _check_k(k)
    if not -1.0 <= u <= 0.0:
        raise InvalidPenaltyError(f"tail penalty must lie in [-1, 0], got {u}")
    vals = np.eye(k) + u * np.tril(np.ones((k, k)), -1)
    return UtilityMatrix(vals, kind="tail_sensitive", u=float(u))


def build_penalized(k: int, penalties: Iterable[Sequence]) -> UtilityMatrix:
    k = _check_k(k)
    vals = np.eye(k)
    seen = set()
    triples = []
    for true_cls, decision, value in penalties:
        true_cls, decision, value = int(true_cls), int(decision), float(value)
        if not (0 <= true_cls < k and 0 <= decision < k):
            raise InvalidPenaltyError(f"penalty index ({true_cls}, {decision}) out of range for K={k}")
        if true_cls == decision:
            raise InvalidPenaltyError(f"penalty on diagonal cell ({true_cls}, {decision})")
        if not -1.0 <= value < 0.0:
            raise InvalidPenaltyError(f"penalty value must lie in [-1, 0), got {value}")
        if (true_cls, decision) in seen:
            raise PenaltyConflictError(f"duplicate penalty for cell ({true_cls}, {decision})")
        seen.add((true_cls, decision))
        vals[true_cls, decision] = value
        triples.append((true_cls, decision, value))
    return UtilityMatrix(vals, kind="penalized", penalties=tuple(triples))


def block_penalties(true_set: Iterable[int], decision_set: Iterable[int], value: float = -1.0):
    """All (true, decision) pairs between two class sets, e.g. mammals x vehicles."""
    return [(i, j, value) for i in true_set for j in decision_set]


def check_normalized(log_probs: np.ndarray, tol: float = NORMALIZATION_TOL) -> None:
    total = np.exp(np.asarray(log_probs, dtype=np.float64)).sum(axis=-1)
    if not np.all(np.abs(total - 1.0) <= tol):
        raise NormalizationError(f"log-probabilities do not normalize (sums {total})")


def log_decision_gain(log_probs, d: int, utility: UtilityMatrix) -> float:
    """log g(d|x, theta) = sum_y' U[y', d] * log p(y'|x, theta)."""
    log_probs = np.asarray(log_probs, dtype=np.float64)
    k = utility.num_classes
    if log_probs.shape != (k,):
        raise InvalidDimensionError(f"expected {k} log-probabilities, got shape {log_probs.shape}")
    check_normalized(log_probs)
    if not 0 <= d < k:
        raise IndexError(f"decision {d} out of range for K={k}")
    col = utility.values[:, d]
    # zero utilities must not multiply -inf log-probabilities
    mask = col != 0.0
    return float(np.dot(col[mask], log_probs[mask]))


def parse_utility_spec(spec: str, k: int) -> UtilityMatrix:
    """Parse a CLI utility spec: ``one_hot``, ``tail_sensitive[:u]`` or a tree-document path."""
    name, _, arg = spec.partition(":")
    if name == "one_hot":
        return build_one_hot(k)
    if name == "tail_sensitive":
        return build_tail_sensitive(k, float(arg) if arg else -1.0)
    from rfdlc.treeio import load_tree

    try:
        util = UtilityMatrix.from_tree(load_tree(spec))
    except FileNotFoundError:
        raise ConfigError(f"utility spec {spec!r} is neither a known kind nor a file") from None
    if util.num_classes != k:
        raise ConfigError(f"utility has K={util.num_classes}, expected {k}")
    return util
