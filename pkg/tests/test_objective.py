import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfdlc.data import WeightForm
from rfdlc.errors import InconsistentCountsError
from rfdlc.model import MlpArchitecture, ParticleEnsemble, init_ensemble
from rfdlc.objective import (
    ObjectiveConfig,
    anneal_weight,
    batch_gradient,
    batch_loss,
    gradient_check,
    kl_regularizer,
    one_hot_reduction_check,
    particle_entropy,
    per_sample_term,
)
from rfdlc.utility import build_one_hot, build_penalized, build_tail_sensitive


def small_problem(seed=0, m=3, trunk=0, k=3):
    rng = np.random.default_rng(seed)
    ens = init_ensemble(MlpArchitecture((4, 5, k), shared_trunk_layers=trunk), m, seed)
    ens.heads += rng.normal(scale=0.3, size=ens.heads.shape)
    x = rng.normal(size=(8, 4))
    y = rng.integers(0, k, size=8)
    return ens, (x, y), np.array([20, 7, 2][:k])


def test_per_sample_one_hot():
    lp = np.log([0.5, 0.5])
    assert per_sample_term(lp, 0, build_one_hot(2)) == pytest.approx(-1.38629, abs=1e-5)


def test_per_sample_tail_sensitive_head_label():
    lp = np.log([0.7, 0.3])
    assert per_sample_term(lp, 0, build_tail_sensitive(2, -1)) == pytest.approx(0.49063, abs=1e-5)


@pytest.mark.parametrize("alpha", [10.0, 1e3, 1e6])
def test_per_sample_large_alpha(alpha):
    lp = np.log([0.2, 0.5, 0.3])
    util = build_tail_sensitive(3, -1)
    bound = 1 / alpha * 1.0 * 3 * abs(lp.min())
    assert abs(per_sample_term(lp, 1, util, alpha) - lp[1]) <= bound


def test_kl_hand_value():
    # two particles at 0 and 2 in every coordinate: L2 = (1/2) * 4P, unit variance, entropy 0
    arch = MlpArchitecture((1, 2))
    p = arch.particle_size
    ens = ParticleEnsemble(arch, np.zeros(0), np.vstack([np.zeros(p), np.full(p, 2.0)]))
    assert particle_entropy(ens) == pytest.approx(0.0, abs=1e-15)
    assert kl_regularizer(ens, lam=1.0) == pytest.approx(2.0 * p)


def test_kl_identical_particles_hit_floor():
    ens, _, _ = small_problem()
    ens.heads[:] = ens.heads[0]
    p = ens.arch.particle_size
    eps = 1e-8
    assert kl_regularizer(ens, lam=0.0, epsilon_var=eps) == pytest.approx(-(p / 2) * math.log(eps))


def test_kl_single_particle_no_l2():
    ens, _, _ = small_problem(m=1)
    assert kl_regularizer(ens, lam=0.0) == 0.0


def test_anneal():
    assert anneal_weight(0, 40) == 1.0
    assert anneal_weight(40, 40) == pytest.approx(0.36788, abs=1e-5)
    assert anneal_weight(7.5, 7.5) == math.exp(-1)


def test_batch_loss_hand_value():
    arch = MlpArchitecture((2, 2))
    ens = ParticleEnsemble(arch, np.zeros(0), np.zeros((1, arch.particle_size)))
    cfg = ObjectiveConfig(build_one_hot(2), WeightForm("linear"), alpha=1.0, lam=0.0)
    loss = batch_loss(ens, (np.array([[0.3, -1.0]]), np.array([1])), np.array([9, 4]), cfg)
    assert loss == pytest.approx(0.25 * 2 * math.log(2), rel=1e-12)
    assert loss == pytest.approx(0.34657, abs=1e-5)


def test_constant_one_hot_is_cross_entropy():
    ens, batch, counts = small_problem(m=1)
    cfg = ObjectiveConfig(build_one_hot(3), WeightForm("constant"), alpha=1e12, lam=0.0)
    lp = ens.log_probs(batch[0])[0]
    nll = -lp[np.arange(8), batch[1]].mean()
    assert batch_loss(ens, batch, counts, cfg) == pytest.approx(nll, abs=1e-9)


def test_duplicated_batch_same_loss():
    ens, (x, y), counts = small_problem()
    cfg = ObjectiveConfig(build_tail_sensitive(3, -0.5), WeightForm("sqrt"), alpha=2.0)
    a = batch_loss(ens, (x, y), counts, cfg, epoch=3)
    b = batch_loss(ens, (np.vstack([x, x]), np.concatenate([y, y])), counts, cfg, epoch=3)
    assert a == pytest.approx(b, rel=1e-13)


def test_zero_count_label_rejected():
    ens, (x, y), _ = small_problem()
    cfg = ObjectiveConfig(build_one_hot(3))
    with pytest.raises(InconsistentCountsError):
        batch_loss(ens, (x, np.full(8, 2)), np.array([5, 5, 0]), cfg)


def test_pure_l2_gradient():
    ens, batch, counts = small_problem(m=1)
    base = ObjectiveConfig(build_one_hot(3), lam=0.0)
    with_l2 = ObjectiveConfig(build_one_hot(3), lam=0.3)
    diff = batch_gradient(ens, batch, counts, with_l2) - batch_gradient(ens, batch, counts, base)
    np.testing.assert_allclose(diff, 2 * 0.3 * ens.particles(), rtol=1e-12, atol=1e-15)


def test_floor_kills_repulsion():
    ens, batch, counts = small_problem(m=2)
    ens.heads[1] = ens.heads[0]
    on = ObjectiveConfig(build_one_hot(3), repulsion=True)
    off = ObjectiveConfig(build_one_hot(3), repulsion=False)
    np.testing.assert_array_equal(batch_gradient(ens, batch, counts, on), batch_gradient(ens, batch, counts, off))


def test_reduction_identity():
    ens, batch, _ = small_problem()
    assert one_hot_reduction_check(ens, batch, alpha=1.0)
    assert one_hot_reduction_check(ens, batch, alpha=2.0)
    head_batch = (batch[0], np.zeros(8, dtype=int))
    assert not one_hot_reduction_check(ens, head_batch, alpha=1.0, utility=build_tail_sensitive(3, -1))


def test_alpha_two_factor():
    lp = np.log([0.1, 0.6, 0.3])
    assert per_sample_term(lp, 1, build_one_hot(3), 2.0) == pytest.approx(1.5 * lp[1], abs=1e-15)


def test_descent_step():
    ens, batch, counts = small_problem(seed=4)
    cfg = ObjectiveConfig(build_tail_sensitive(3, -1), WeightForm("linear"), alpha=3.0)
    g = batch_gradient(ens, batch, counts, cfg, epoch=2)
    after = ens.copy()
    after.heads -= 1e-4 * g
    assert batch_loss(after, batch, counts, cfg, 2) < batch_loss(ens, batch, counts, cfg, 2)


def test_entropy_permutation_invariant():
    ens, _, _ = small_problem(m=4)
    shuffled = ens.copy()
    shuffled.heads = shuffled.heads[[2, 0, 3, 1]]
    assert particle_entropy(shuffled) == pytest.approx(particle_entropy(ens), rel=1e-13)


@pytest.mark.parametrize("util", [build_one_hot(3), build_tail_sensitive(3, -1), build_penalized(3, [(2, 0, -1.0)])])
@pytest.mark.parametrize("trunk,m", [(0, 1), (0, 3), (1, 3)])
def test_gradient_matches_finite_differences(util, trunk, m):
    ens, batch, counts = small_problem(seed=7, m=m, trunk=trunk)
    cfg = ObjectiveConfig(util, WeightForm("effective_number"), alpha=0.7, lam=5e-4, tau=10.0)
    assert gradient_check(ens, batch, counts, cfg, epoch=3).passed


def test_corrupted_gradient_fails():
    ens, batch, counts = small_problem()
    cfg = ObjectiveConfig(build_one_hot(3))
    res = gradient_check(ens, batch, counts, cfg, corrupt=1e-3)
    assert not res.passed
    assert res.worst == ("heads", (0, 0))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-1, 0), st.sampled_from(["linear", "sqrt", "log", "constant"]),
       st.floats(0.1, 10))
def test_gradient_random_instances(seed, u, form, alpha):
    ens, batch, counts = small_problem(seed=seed % 1000)
    cfg = ObjectiveConfig(build_tail_sensitive(3, u), WeightForm(form), alpha=alpha, lam=5e-4)
    # the entropy term makes |loss| ~ 1e2, so step 1e-6 leaves ~1e-8 roundoff in the differences
    assert gradient_check(ens, batch, counts, cfg, epoch=1, step=1e-5).passed
