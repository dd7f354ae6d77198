import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from rfdlc.data import WeightForm, synth_gaussian_mixture
from rfdlc.errors import ConfigError, DivergenceError
from rfdlc.experiment import min_pairwise_distance
from rfdlc.model import init_ensemble
from rfdlc.objective import ObjectiveConfig
from rfdlc.trainer import TrainConfig, default_milestones, ensemble_predict, train
from rfdlc.utility import build_one_hot, build_tail_sensitive


def config(**kw):
    obj = kw.pop("objective", None) or ObjectiveConfig(build_one_hot(2), WeightForm("constant"), lam=1e-4)
    base = dict(hidden=(8,), num_particles=2, learning_rate=0.01, epochs=10, batch_size=32, seed=3)
    base.update(kw)
    return TrainConfig(objective=obj, **base)


@pytest.fixture(scope="module")
def separable():
    return synth_gaussian_mixture(2, 2, 100, 6.0, seed=0)


def test_separable_two_class(separable):
    oracle = LogisticRegression().fit(separable.features, separable.labels).score(separable.features, separable.labels)
    assert oracle > 0.95
    ens, hist = train(config(epochs=50), separable)
    assert hist.records[-1]["acc"] > 0.95
    assert np.mean(ensemble_predict(ens, separable.features) == separable.labels) > 0.95


def test_deterministic(separable):
    a, ha = train(config(), separable)
    b, hb = train(config(), separable)
    np.testing.assert_array_equal(a.heads, b.heads)
    assert ha.records == hb.records


def test_zero_learning_rate(separable):
    cfg = config(learning_rate=0.0, epochs=3)
    ens, hist = train(cfg, separable)
    start = init_ensemble(cfg.architecture(2, 2), 2, cfg.seed)
    np.testing.assert_array_equal(ens.heads, start.heads)
    assert len(hist) == 3
    assert hist.column("anneal_weight").tolist() == [np.exp(-t / 40) for t in range(3)]


def test_loss_non_increasing_early(separable):
    cfg = config(num_particles=1, epochs=5, learning_rate=1e-2, momentum=0.0)
    _, hist = train(cfg, separable)
    assert np.all(np.diff(hist.column("loss")) <= 0)


def test_repulsion_spreads_particles(separable):
    on = ObjectiveConfig(build_one_hot(2), WeightForm("constant"), lam=5e-4, tau=40, repulsion=True)
    off = ObjectiveConfig(build_one_hot(2), WeightForm("constant"), lam=5e-4, tau=40, repulsion=False)
    ens_on, _ = train(config(objective=on, num_particles=3, epochs=20), separable)
    ens_off, _ = train(config(objective=off, num_particles=3, epochs=20), separable)
    assert min_pairwise_distance(ens_on) > min_pairwise_distance(ens_off)


def test_divergence_guard(separable):
    obj = ObjectiveConfig(build_tail_sensitive(2, -1), WeightForm("constant"), alpha=0.01)
    with pytest.raises(DivergenceError) as err:
        train(config(objective=obj, learning_rate=1e300, epochs=5), separable)
    assert err.value.exit_code == 4
    assert "epoch" in str(err.value)


def test_config_checks(separable):
    with pytest.raises(ConfigError):
        train(config(batch_size=10_000), separable)
    with pytest.raises(ConfigError):
        config(milestones=(5, 3))
    with pytest.raises(ConfigError):
        config(momentum=1.0)
    with pytest.raises(ConfigError):
        train(config(objective=ObjectiveConfig(build_one_hot(3))), separable)


def test_schedule():
    assert default_milestones(100) == (60, 80)
    cfg = config(epochs=100)
    assert [cfg.lr_at(e) for e in (0, 59, 60, 80)] == pytest.approx([0.01, 0.01, 0.001, 0.0001])


def test_history_csv(separable, tmp_path):
    _, hist = train(config(epochs=2), separable)
    hist.save_csv(tmp_path / "h.csv", seed=3)
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "# rfdlc 0.1.0 seed=3"
    assert lines[1] == "epoch,loss,acc,repulsive_value,anneal_weight"
    assert len(lines) == 4
