import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfdlc.errors import ConfigError, NumericOverflowError
from rfdlc.model import (
    MlpArchitecture,
    ParticleEnsemble,
    entropy,
    forward_log_probs,
    init_ensemble,
    log_softmax,
    predictive_distribution,
)

ARCH = MlpArchitecture((4, 6, 3))


def test_architecture_checks():
    with pytest.raises(ConfigError):
        MlpArchitecture((4,))
    with pytest.raises(ConfigError):
        MlpArchitecture((4, 5, 3), shared_trunk_layers=2)
    arch = MlpArchitecture((4, 5, 3), shared_trunk_layers=1)
    assert arch.trunk_size == 25 and arch.head_size == 18


def test_init_deterministic_and_distinct():
    a = init_ensemble(ARCH, 3, seed=11)
    b = init_ensemble(ARCH, 3, seed=11)
    np.testing.assert_array_equal(a.particles(), b.particles())
    p = a.particles()
    assert not np.array_equal(p[0], p[1]) and not np.array_equal(p[1], p[2]) and not np.array_equal(p[0], p[2])
    np.testing.assert_array_equal(a.weights, [1 / 3] * 3)


def test_init_scale():
    ens = init_ensemble(MlpArchitecture((100, 50, 3)), 1, seed=0)
    w1 = ens.heads[0, :5000]
    assert np.abs(w1).max() <= 0.1


def test_single_particle_matches_softmax():
    ens = init_ensemble(ARCH, 1, seed=2)
    x = np.random.default_rng(0).normal(size=(5, 4))
    probs, _ = predictive_distribution(ens, x)
    np.testing.assert_allclose(probs, np.exp(forward_log_probs(ARCH, ens.particle(0), x)), rtol=0, atol=1e-15)


def test_zero_network_is_uniform():
    ens = ParticleEnsemble(ARCH, np.zeros(0), np.zeros((1, ARCH.particle_size)))
    np.testing.assert_allclose(ens.log_probs(np.array([3.0, -1.0, 0.5, 2.0])), [[math.log(1 / 3)] * 3])


def test_log_softmax_stability():
    np.testing.assert_allclose(log_softmax(np.array([0.0, 0.0])), np.log([0.5, 0.5]))
    out = log_softmax(np.array([1000.0, 0.0]))
    assert np.all(np.isfinite(out))
    assert out[0] == pytest.approx(0.0, abs=1e-300) and out[1] == pytest.approx(-1000.0)


def test_overflow_detected():
    ens = ParticleEnsemble(ARCH, np.zeros(0), np.full((1, ARCH.particle_size), 1e308))
    with pytest.raises(NumericOverflowError):
        ens.log_probs(np.ones(4))


def test_two_opposite_particles():
    arch = MlpArchitecture((1, 2))
    # logits = x*W + b with x=0, so only the biases matter
    heads = np.array([[0.0, 0.0, 800.0, 0.0], [0.0, 0.0, 0.0, 800.0]])
    ens = ParticleEnsemble(arch, np.zeros(0), heads)
    probs, ent = predictive_distribution(ens, np.zeros(1))
    np.testing.assert_allclose(probs, [0.5, 0.5])
    assert ent == pytest.approx(math.log(2))


def test_entropy_of_one_hot():
    assert entropy(np.array([0.0, 1.0, 0.0])) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(0, 1))
def test_predictive_properties(seed, m, trunk):
    arch = MlpArchitecture((3, 5, 4), shared_trunk_layers=trunk)
    ens = init_ensemble(arch, m, seed)
    ens.heads *= 5.0
    x = np.random.default_rng(seed).normal(scale=3, size=(6, 3))
    probs, ent = predictive_distribution(ens, x)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(ent >= -1e-12) and np.all(ent <= math.log(4) + 1e-12)


def test_shared_trunk_particles():
    ens = init_ensemble(MlpArchitecture((3, 5, 4), shared_trunk_layers=1), 3, seed=0)
    p = ens.particles()
    np.testing.assert_array_equal(p[0, :20], p[1, :20])
    assert not np.array_equal(p[0, 20:], p[1, 20:])


def test_checkpoint_round_trip(tmp_path):
    ens = init_ensemble(MlpArchitecture((4, 7, 5, 3), shared_trunk_layers=1), 3, seed=5)
    ens.heads += np.random.default_rng(1).normal(size=ens.heads.shape) * 1e-3
    ens.save(tmp_path / "ck.yaml")
    back = ParticleEnsemble.load(tmp_path / "ck.yaml")
    np.testing.assert_array_equal(back.trunk, ens.trunk)
    np.testing.assert_array_equal(back.heads, ens.heads)
    x = np.random.default_rng(2).normal(size=(9, 4))
    np.testing.assert_array_equal(back.log_probs(x), ens.log_probs(x))
    text = (tmp_path / "ck.yaml").read_text()
    assert text.startswith("# rfdlc") and "seed=5" in text.splitlines()[0]
