"""Particle ensemble of small tanh MLPs.

Parameters live in two flat arrays: ``trunk`` holds the layers shared by all
particles (empty unless ``shared_trunk_layers > 0``) and ``heads`` is an
``M x P_head`` matrix, one row per particle. Each layer is stored as its
weight matrix (row-major, ``in x out``) followed by its bias.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rfdlc.errors import ConfigError, NumericOverflowError
from rfdlc.treeio import dump_tree, load_tree

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MlpArchitecture:
    layer_sizes: tuple[int, ...]
    shared_trunk_layers: int = 0
    activation: str = "tanh"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ConfigError(f"layer_sizes must have >= 2 positive entries, got {sizes}")
        if sizes[-1] < 2:
            raise ConfigError("output layer needs at least 2 classes")
        if not 0 <= self.shared_trunk_layers < self.num_layers:
            raise ConfigError(f"shared_trunk_layers must lie in [0, {self.num_layers})")
        if self.activation != "tanh":
            raise ConfigError("only the tanh activation is supported")

    @property
    def num_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def num_classes(self) -> int:
        return self.layer_sizes[-1]

    def layer_shapes(self) -> list[tuple[int, int]]:
        return list(zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    def _sizes(self, layers) -> int:
        return sum(i * o + o for i, o in layers)

    @property
    def trunk_size(self) -> int:
        return self._sizes(self.layer_shapes()[: self.shared_trunk_layers])

    @property
    def head_size(self) -> int:
        return self._sizes(self.layer_shapes()[self.shared_trunk_layers:])

    @property
    def particle_size(self) -> int:
        return self.trunk_size + self.head_size


def _unpack(flat: np.ndarray, shapes):
    """Split the trailing axis of ``flat`` into (W, b) views, one pair per layer."""
    out, off = [], 0
    lead = flat.shape[:-1]
    for i, o in shapes:
        w = flat[..., off:off + i * o].reshape(*lead, i, o)
        off += i * o
        b = flat[..., off:off + o]
        off += o
        out.append((w, b))
    return out


@dataclass(eq=False)
class ParticleEnsemble:
    arch: MlpArchitecture
    trunk: np.ndarray
    heads: np.ndarray
    seed: int | None = None
    weights: np.ndarray = field(init=False)

    def __post_init__(self):
        self.trunk = np.asarray(self.trunk, dtype=np.float64).reshape(-1)
        self.heads = np.atleast_2d(np.asarray(self.heads, dtype=np.float64))
        if self.trunk.size != self.arch.trunk_size or self.heads.shape[1] != self.arch.head_size:
            raise ConfigError("parameter arrays do not match the architecture")
        m = self.heads.shape[0]
        self.weights = np.full(m, 1.0 / m)

    @property
    def num_particles(self) -> int:
        return self.heads.shape[0]

    @property
    def num_classes(self) -> int:
        return self.arch.num_classes

    def particle(self, j: int) -> np.ndarray:
        """Full parameter vector of particle j (shared trunk first)."""
        return np.concatenate([self.trunk, self.heads[j]])

    def particles(self) -> np.ndarray:
        return np.stack([self.particle(j) for j in range(self.num_particles)])

    def copy(self) -> "ParticleEnsemble":
        return ParticleEnsemble(self.arch, self.trunk.copy(), self.heads.copy(), self.seed)

    def log_probs(self, x) -> np.ndarray:
        """M x N x K log-probabilities (M x K for a single input vector)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        lp = forward(self, np.atleast_2d(x))[0]
        return lp[:, 0, :] if single else lp

    def to_tree(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "arch": {
                "layer_sizes": list(self.arch.layer_sizes),
                "activation": self.arch.activation,
            },
            "m": self.num_particles,
            "seed": self.seed,
            "shared_trunk_layers": self.arch.shared_trunk_layers,
            "trunk": [float(v) for v in self.trunk],
            "particles": [[float(v) for v in row] for row in self.heads],
        }

    @classmethod
    def from_tree(cls, doc: dict) -> "ParticleEnsemble":
        try:
            if doc["version"] != CHECKPOINT_VERSION:
                raise ConfigError(f"unsupported checkpoint version {doc['version']}")
            arch = MlpArchitecture(tuple(doc["arch"]["layer_sizes"]), int(doc["shared_trunk_layers"]),
                                   doc["arch"].get("activation", "tanh"))
            heads = np.array(doc["particles"], dtype=np.float64).reshape(int(doc["m"]), -1)
            return cls(arch, np.array(doc["trunk"], dtype=np.float64), heads, doc.get("seed"))
        except KeyError as exc:
            raise ConfigError(f"checkpoint missing field {exc.args[0]!r}") from None

    def save(self, path: str | Path) -> None:
        dump_tree(self.to_tree(), path, seed=self.seed)

    @classmethod
    def load(cls, path: str | Path) -> "ParticleEnsemble":
        return cls.from_tree(load_tree(Path(path)))


def _init_layers(rng: np.random.Generator, shapes) -> np.ndarray:
    parts = []
    for i, o in shapes:
        bound = 1.0 / np.sqrt(i)
        parts.append(rng.uniform(-bound, bound, size=i * o))
        parts.append(rng.uniform(-bound, bound, size=o))
    return np.concatenate(parts) if parts else np.zeros(0)


def init_ensemble(arch: MlpArchitecture, m: int, seed: int) -> ParticleEnsemble:
    """Uniform(+-1/sqrt(fan_in)) initialization with an independent sub-seed per particle."""
    if m < 1:
        raise ConfigError(f"need at least one particle, got {m}")
    ss = np.random.SeedSequence(seed)
    trunk_seq, *particle_seqs = ss.spawn(m + 1)
    shapes = arch.layer_shapes()
    trunk = _init_layers(np.random.default_rng(trunk_seq), shapes[: arch.shared_trunk_layers])
    heads = np.stack([
        _init_layers(np.random.default_rng(s), shapes[arch.shared_trunk_layers:]) for s in particle_seqs
    ])
    return ParticleEnsemble(arch, trunk, heads, seed)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shift = logits - logits.max(axis=-1, keepdims=True)
    return shift - np.log(np.exp(shift).sum(axis=-1, keepdims=True))


def forward(ens: ParticleEnsemble, x: np.ndarray):
    """Batched forward pass; returns (M x N x K log-probs, cache for ``backward``)."""
    arch = ens.arch
    shapes = arch.layer_shapes()
    n_trunk = arch.shared_trunk_layers
    acts = [x]
    h = x
    for w, b in _unpack(ens.trunk, shapes[:n_trunk]):
        h = np.tanh(h @ w + b)
        acts.append(h)
    m = ens.num_particles
    h = np.broadcast_to(h, (m, *h.shape))
    head_layers = _unpack(ens.heads, shapes[n_trunk:])
    with np.errstate(over="ignore", invalid="ignore"):
        for li, (w, b) in enumerate(head_layers):
            z = h @ w + b[:, None, :]
            h = z if li == len(head_layers) - 1 else np.tanh(z)
            if li < len(head_layers) - 1:
                acts.append(h)
    if not np.all(np.isfinite(h)):
        raise NumericOverflowError("non-finite logits in forward pass")
    return log_softmax(h), acts


def forward_log_probs(arch: MlpArchitecture, theta: np.ndarray, x) -> np.ndarray:
    """Log-probabilities of a single particle given its full parameter vector."""
    theta = np.asarray(theta, dtype=np.float64)
    ens = ParticleEnsemble(arch, theta[: arch.trunk_size], theta[None, arch.trunk_size:])
    return ens.log_probs(x)[0]


def backward(ens: ParticleEnsemble, acts, dlogits: np.ndarray):
    """Gradients w.r.t. (trunk, heads) given dL/dlogits of shape M x N x K."""
    arch = ens.arch
    shapes = arch.layer_shapes()
    n_trunk = arch.shared_trunk_layers
    g_heads = np.zeros_like(ens.heads)
    g_trunk = np.zeros_like(ens.trunk)
    head_w = _unpack(ens.heads, shapes[n_trunk:])
    head_g = _unpack(g_heads, shapes[n_trunk:])
    n_head = len(head_w)
    delta = dlogits
    for li in range(n_head - 1, -1, -1):
        a_in = acts[n_trunk + li]
        gw, gb = head_g[li]
        if a_in.ndim == 2:
            gw[...] = np.einsum("ni,mno->mio", a_in, delta)
        else:
            gw[...] = np.matmul(a_in.transpose(0, 2, 1), delta)
        gb[...] = delta.sum(axis=1)
        if li > 0 or n_trunk > 0:
            delta = np.matmul(delta, head_w[li][0].transpose(0, 2, 1))
            if li > 0:
                delta = delta * (1.0 - a_in ** 2)
    if n_trunk:
        delta = delta.sum(axis=0)
        trunk_w = _unpack(ens.trunk, shapes[:n_trunk])
        trunk_g = _unpack(g_trunk, shapes[:n_trunk])
        for li in range(n_trunk - 1, -1, -1):
            out = acts[li + 1]
            delta = delta * (1.0 - out ** 2)
            gw, gb = trunk_g[li]
            gw[...] = acts[li].T @ delta
            gb[...] = delta.sum(axis=0)
            if li > 0:
                delta = delta @ trunk_w[li][0].T
    return g_trunk, g_heads


def predictive_distribution(ens: ParticleEnsemble, x):
    """Uniform particle average of softmax outputs, and its entropy in nats."""
    lp = ens.log_probs(x)
    probs = np.exp(lp).mean(axis=0)
    return probs, entropy(probs)


def entropy(probs: np.ndarray) -> np.ndarray | float:
    p = np.asarray(probs, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    h = terms.sum(axis=-1)
    return float(h) if np.ndim(h) == 0 else h
