import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfdlc.errors import InvalidPenaltyError, NormalizationError, PenaltyConflictError, ConfigError
from rfdlc.treeio import dump_tree, load_tree
from rfdlc.utility import (
    UtilityMatrix,
    block_penalties,
    build_one_hot,
    build_penalized,
    build_tail_sensitive,
    log_decision_gain,
    parse_utility_spec,
)

LOG = np.log([0.7, 0.3])


def _simplex(k, draw_values):
    p = np.asarray(draw_values, dtype=float) + 1e-3
    return np.log(p / p.sum())


def test_tail_sensitive_two_class():
    np.testing.assert_array_equal(build_tail_sensitive(2, -1).values, [[1, 0], [-1, 1]])


def test_tail_sensitive_zero_penalty_is_identity():
    assert build_tail_sensitive(3, 0.0) == build_one_hot(3)


def test_tail_sensitive_half():
    want = [[1, 0, 0], [-0.5, 1, 0], [-0.5, -0.5, 1]]
    np.testing.assert_array_equal(build_tail_sensitive(3, -0.5).values, want)


@pytest.mark.parametrize("u", [0.1, -1.5, math.nan])
def test_tail_sensitive_rejects_bad_penalty(u):
    with pytest.raises(InvalidPenaltyError):
        build_tail_sensitive(4, u)


def test_penalized_single_cell():
    v = build_penalized(10, [(2, 0, -1.0)]).values
    want = np.eye(10)
    want[2, 0] = -1
    np.testing.assert_array_equal(v, want)


def test_penalized_block():
    mammals, vehicles = [3, 4, 5, 7], [0, 1, 8, 9]
    v = build_penalized(10, block_penalties(mammals, vehicles)).values
    assert (v[np.ix_(mammals, vehicles)] == -1).all()
    assert (v == -1).sum() == 16
    assert np.trace(v) == 10


def test_penalized_empty_is_identity():
    assert build_penalized(5, []) == build_one_hot(5)


def test_penalized_errors():
    with pytest.raises(InvalidPenaltyError):
        build_penalized(3, [(1, 1, -1.0)])
    with pytest.raises(InvalidPenaltyError):
        build_penalized(3, [(0, 3, -1.0)])
    with pytest.raises(InvalidPenaltyError):
        build_penalized(3, [(0, 1, 0.0)])
    with pytest.raises(PenaltyConflictError):
        build_penalized(3, [(0, 1, -1.0), (0, 1, -0.5)])


def test_raw_matrix_checks():
    with pytest.raises(ConfigError):
        UtilityMatrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(ConfigError):
        UtilityMatrix(np.ones((2, 3)))
    raw = UtilityMatrix(np.array([[2.0, 0.5], [-3.0, 1.0]]))
    assert raw.kind == "raw"


def test_values_are_read_only():
    u = build_one_hot(3)
    with pytest.raises(ValueError):
        u.values[0, 0] = 5.0


def test_gain_examples():
    assert log_decision_gain(LOG, 0, build_one_hot(2)) == pytest.approx(-0.35667, abs=1e-5)
    ts = build_tail_sensitive(2, -1)
    assert log_decision_gain(LOG, 0, ts) == pytest.approx(0.84730, abs=1e-5)
    assert log_decision_gain(LOG, 1, ts) == pytest.approx(-1.20397, abs=1e-5)


def test_gain_rejects_unnormalized():
    with pytest.raises(NormalizationError):
        log_decision_gain(np.log([0.7, 0.4]), 0, build_one_hot(2))
    with pytest.raises(IndexError):
        log_decision_gain(LOG, 2, build_one_hot(2))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8).flatmap(lambda k: st.tuples(
    st.just(k), st.lists(st.floats(0, 1), min_size=k, max_size=k), st.integers(0, k - 1))))
def test_one_hot_gain_is_log_prob(case):
    k, raw, d = case
    lp = _simplex(k, raw)
    assert log_decision_gain(lp, d, build_one_hot(k)) == lp[d]


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8).flatmap(lambda k: st.tuples(
    st.just(k), st.lists(st.floats(0, 1), min_size=k, max_size=k),
    st.floats(-1, 0), st.floats(-1, 0), st.integers(0, k - 1))))
def test_gain_is_linear_in_utility(case):
    k, raw, u1, u2, d = case
    lp = _simplex(k, raw)
    a, b = build_tail_sensitive(k, u1), build_tail_sensitive(k, u2)
    lhs = log_decision_gain(lp, d, a + b)
    rhs = log_decision_gain(lp, d, a) + log_decision_gain(lp, d, b)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


@pytest.mark.parametrize("util", [build_one_hot(4), build_tail_sensitive(4, -0.25),
                                  build_penalized(4, [(3, 0, -1.0), (2, 1, -0.5)])])
def test_tree_round_trip(util):
    doc = load_tree(dump_tree(util.to_tree()))
    back = UtilityMatrix.from_tree(doc)
    assert back == util
    assert back.kind == util.kind


def test_parse_spec(tmp_path):
    assert parse_utility_spec("one_hot", 3) == build_one_hot(3)
    assert parse_utility_spec("tail_sensitive:-0.5", 3) == build_tail_sensitive(3, -0.5)
    path = tmp_path / "u.yaml"
    dump_tree(build_penalized(3, [(2, 0, -1.0)]).to_tree(), path)
    assert parse_utility_spec(str(path), 3).values[2, 0] == -1
    with pytest.raises(ConfigError):
        parse_utility_spec(str(path), 4)
    with pytest.raises(ConfigError):
        parse_utility_spec(str(tmp_path / "missing.yaml"), 3)
