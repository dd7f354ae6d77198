"""Importance-weighted integrated-gain loss over a particle ensemble.

The minimized loss is the negated lower bound with the additive constant
dropped::

    loss = -s/B * sum_i 1/M sum_j w(n_yi) [log p_j(y_i) + 1/alpha sum_y' U[y', y_i] log p_j(y')]
           + lambda/M sum_j ||theta_j||^2
           - exp(-t/tau) * 1/2 sum_k log max(var_k, eps)

``s`` is ``data_scale`` (1 gives the batch mean; the training-set size gives
the full-data sum) and ``var_k`` is the across-particle variance of every
non-shared coordinate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from rfdlc.data import WeightForm, importance_weight
from rfdlc.errors import ConfigError, InconsistentCountsError, InvalidDimensionError
from rfdlc.model import ParticleEnsemble, backward, forward
from rfdlc.utility import UtilityMatrix, build_one_hot, check_normalized


@dataclass(frozen=True)
class ObjectiveConfig:
    utility: UtilityMatrix
    weight_form: WeightForm = field(default_factory=WeightForm)
    alpha: float = 1.0
    lam: float = 5e-4
    tau: float = 40.0
    epsilon_var: float = 1e-8
    repulsion: bool = True
    data_scale: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "tau", "epsilon_var", "data_scale"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"objective.{name} must be finite and > 0, got {v}")
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ConfigError(f"objective.lambda must be finite and >= 0, got {self.lam}")


def per_sample_term(log_probs, y: int, utility: UtilityMatrix, alpha: float = 1.0) -> float:
    """log p(y) + 1/alpha * sum_y' U[y', y] log p(y'); the decision is the true label."""
    log_probs = np.asarray(log_probs, dtype=np.float64)
    check_normalized(log_probs)
    k = utility.num_classes
    if log_probs.shape != (k,):
        raise InvalidDimensionError(f"expected {k} log-probabilities, got {log_probs.shape}")
    if not 0 <= y < k:
        raise IndexError(f"label {y} out of range for K={k}")
    col = utility.values[:, y]
    mask = col != 0.0
    return float(log_probs[y] + np.dot(col[mask], log_probs[mask]) / alpha)


def _coefficients(labels: np.ndarray, utility: UtilityMatrix, alpha: float) -> np.ndarray:
    """Row i holds c_i with term_i = sum_k c_i[k] log p(k)."""
    coef = utility.values[:, labels].T / alpha
    coef[np.arange(labels.size), labels] += 1.0
    return coef


def sample_weights(labels: np.ndarray, counts, form: WeightForm) -> np.ndarray:
    counts = np.asarray(counts)
    if labels.size and labels.max() >= counts.size:
        raise InconsistentCountsError(f"label {labels.max()} has no class count")
    n = counts[labels]
    if np.any(n < 1):
        raise InconsistentCountsError(f"labels {np.unique(labels[n < 1]).tolist()} have zero count")
    return np.asarray(importance_weight(form, n), dtype=np.float64).reshape(labels.shape)


def anneal_weight(t: float, tau: float) -> float:
    if t < 0 or tau <= 0:
        raise ConfigError("need t >= 0 and tau > 0")
    return math.exp(-t / tau)


def _entropy_parts(heads: np.ndarray, eps: float):
    """(1/2 sum_k log max(var_k, eps), d/dheads of that sum)."""
    m = heads.shape[0]
    mean = heads.mean(axis=0)
    var = ((heads - mean) ** 2).mean(axis=0)
    active = var > eps
    clamped = np.where(active, var, eps)
    value = 0.5 * float(np.log(clamped).sum())
    grad = np.where(active, (heads - mean) / (m * clamped), 0.0)
    return value, grad


def particle_entropy(ens: ParticleEnsemble, eps: float = 1e-8) -> float:
    """SWAG-diagonal entropy estimate over non-shared coordinates (0 for one particle)."""
    if ens.num_particles < 2:
        return 0.0
    return _entropy_parts(ens.heads, eps)[0]


def kl_regularizer(ens: ParticleEnsemble, lam: float, epsilon_var: float = 1e-8,
                   repulsive_scale: float = 1.0) -> float:
    """lambda/M sum_j ||theta_j||^2 - repulsive_scale * entropy estimate."""
    m = ens.num_particles
    l2 = lam / m * float((ens.particles() ** 2).sum())
    return l2 - repulsive_scale * particle_entropy(ens, epsilon_var)


def _data_term(ens: ParticleEnsemble, x, y, counts, cfg: ObjectiveConfig, need_grad: bool):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise ConfigError("empty batch")
    if cfg.utility.num_classes != ens.num_classes:
        raise ConfigError("utility and model disagree on the number of classes")
    w = sample_weights(y, counts, cfg.weight_form)
    coef = _coefficients(y, cfg.utility, cfg.alpha)
    lp, acts = forward(ens, x)
    m, b = ens.num_particles, y.size
    scale = cfg.data_scale / (b * m)
    # 0 * -inf must stay 0 for one-hot style zero coefficients
    terms = np.where(coef != 0.0, coef * lp, 0.0).sum(axis=-1)
    value = -scale * float((w * terms).sum())
    if not need_grad:
        return value, None, None
    probs = np.exp(lp)
    dlogits = -scale * w[None, :, None] * (coef[None] - coef.sum(axis=1)[None, :, None] * probs)
    g_trunk, g_heads = backward(ens, acts, dlogits)
    return value, g_trunk, g_heads


def _repulsive_scale(cfg: ObjectiveConfig, epoch: float, m: int) -> float:
    if not cfg.repulsion or m < 2:
        return 0.0
    return anneal_weight(epoch, cfg.tau)


def batch_loss(ens: ParticleEnsemble, batch, counts, cfg: ObjectiveConfig, epoch: float = 0) -> float:
    x, y = batch
    data, _, _ = _data_term(ens, x, y, counts, cfg, need_grad=False)
    rep = _repulsive_scale(cfg, epoch, ens.num_particles)
    return data + kl_regularizer(ens, cfg.lam, cfg.epsilon_var, rep)


def loss_and_gradient(ens: ParticleEnsemble, batch, counts, cfg: ObjectiveConfig, epoch: float = 0):
    """Return (loss, trunk gradient, per-particle head gradients, entropy estimate)."""
    x, y = batch
    m = ens.num_particles
    data, g_trunk, g_heads = _data_term(ens, x, y, counts, cfg, need_grad=True)
    l2 = cfg.lam / m * float((ens.particles() ** 2).sum())
    g_heads += 2.0 * cfg.lam / m * ens.heads
    g_trunk += 2.0 * cfg.lam * ens.trunk
    ent = 0.0
    rep = _repulsive_scale(cfg, epoch, m)
    if m >= 2:
        ent, g_ent = _entropy_parts(ens.heads, cfg.epsilon_var)
        if rep:
            g_heads -= rep * g_ent
    return data + l2 - rep * ent, g_trunk, g_heads, ent


def batch_gradient(ens: ParticleEnsemble, batch, counts, cfg: ObjectiveConfig, epoch: float = 0) -> np.ndarray:
    """M x P gradient, row j is d loss / d theta_j.

    With a shared trunk the trunk coordinates of every row hold the full
    gradient of the shared parameters (they are one set of numbers).
    """
    _, g_trunk, g_heads, _ = loss_and_gradient(ens, batch, counts, cfg, epoch)
    return np.hstack([np.broadcast_to(g_trunk, (ens.num_particles, g_trunk.size)), g_heads])


def one_hot_reduction_check(ens: ParticleEnsemble, batch, alpha: float = 1.0,
                            utility: UtilityMatrix | None = None, tol: float = 1e-12) -> bool:
    """True iff the per-sample term equals (1 + 1/alpha) log p(y) for every sample and particle."""
    x, y = batch
    util = utility if utility is not None else build_one_hot(ens.num_classes)
    lp = ens.log_probs(np.atleast_2d(x))
    for j in range(ens.num_particles):
        for i, label in enumerate(np.asarray(y)):
            got = per_sample_term(lp[j, i], int(label), util, alpha)
            want = (1.0 + 1.0 / alpha) * lp[j, i, label]
            if abs(got - want) > tol:
                return False
    return True


def numeric_gradient(ens: ParticleEnsemble, batch, counts, cfg: ObjectiveConfig, epoch: float = 0,
                     step: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Central finite differences of ``batch_loss`` w.r.t. (trunk, heads)."""
    probe = ens.copy()
    g_trunk = np.zeros_like(probe.trunk)
    g_heads = np.zeros_like(probe.heads)
    for arr, out in ((probe.trunk, g_trunk), (probe.heads, g_heads)):
        flat, gflat = arr.reshape(-1), out.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = batch_loss(probe, batch, counts, cfg, epoch)
            flat[i] = orig - step
            down = batch_loss(probe, batch, counts, cfg, epoch)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * step)
    return g_trunk, g_heads


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst: tuple[str, tuple[int, ...]]
    analytic: float
    numeric: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def gradient_check(ens: ParticleEnsemble, batch, counts, cfg: ObjectiveConfig, epoch: float = 0,
                   step: float = 1e-6, tol: float = 1e-4, corrupt: float = 0.0) -> GradCheckResult:
    """Compare the analytic gradient with central differences.

    ``corrupt`` adds a constant to one analytic coordinate (negative control).
    """
    _, a_trunk, a_heads, _ = loss_and_gradient(ens, batch, counts, cfg, epoch)
    if corrupt:
        a_heads = a_heads.copy()
        a_heads.flat[0] += corrupt
    n_trunk, n_heads = numeric_gradient(ens, batch, counts, cfg, epoch, step)
    worst = ("heads", (0, 0), -1.0, 0.0, 0.0)
    for name, a, n in (("trunk", a_trunk, n_trunk), ("heads", a_heads, n_heads)):
        if a.size == 0:
            continue
        rel = relative_error(a, n)
        idx = np.unravel_index(int(np.argmax(rel)), rel.shape)
        if rel[idx] > worst[2]:
            worst = (name, tuple(int(i) for i in idx), float(rel[idx]), float(a[idx]), float(n[idx]))
    return GradCheckResult(worst[2], (worst[0], worst[1]), worst[3], worst[4], tol)
