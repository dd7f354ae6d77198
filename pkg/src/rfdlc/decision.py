"""Test-time decisions maximizing the log posterior expected gain."""
from __future__ import annotations

import numpy as np

from rfdlc.errors import InvalidDimensionError
from rfdlc.model import ParticleEnsemble
from rfdlc.utility import UtilityMatrix, check_normalized


def _argmax_last(scores: np.ndarray) -> np.ndarray:
    """Argmax along the last axis; ties go to the larger class index."""
    k = scores.shape[-1]
    return k - 1 - np.argmax(scores[..., ::-1], axis=-1)


def _weighted(log_probs: np.ndarray, utility: UtilityMatrix) -> np.ndarray:
    if np.all(np.isfinite(log_probs)):
        return log_probs @ utility.values
    # zero utilities must not multiply -inf log-probabilities
    with np.errstate(invalid="ignore"):
        prod = log_probs[..., :, None] * utility.values
    return np.where(utility.values != 0.0, prod, 0.0).sum(axis=-2)


def decision_scores(log_probs_matrix, utility: UtilityMatrix) -> np.ndarray:
    """score(d) = sum_j sum_y' U[y', d] log p_j(y'); input is M x K or M x N x K."""
    lp = np.asarray(log_probs_matrix, dtype=np.float64)
    if lp.shape[-1] != utility.num_classes:
        raise InvalidDimensionError(f"log-probabilities have K={lp.shape[-1]}, utility has K={utility.num_classes}")
    return _weighted(lp.sum(axis=0), utility)


def decide(log_probs_matrix, utility: UtilityMatrix) -> int:
    lp = np.atleast_2d(np.asarray(log_probs_matrix, dtype=np.float64))
    if lp.ndim != 2:
        raise InvalidDimensionError(f"expected an M x K matrix, got shape {lp.shape}")
    check_normalized(lp)
    return int(_argmax_last(decision_scores(lp, utility)))


def decide_batch(ens: ParticleEnsemble, x, utility: UtilityMatrix, return_scores: bool = False):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if utility.num_classes != ens.num_classes:
        raise InvalidDimensionError(f"utility has K={utility.num_classes}, model has K={ens.num_classes}")
    scores = decision_scores(ens.log_probs(x), utility)
    preds = _argmax_last(scores)
    return (preds, scores) if return_scores else preds
