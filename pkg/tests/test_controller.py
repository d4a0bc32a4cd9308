import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hdpid.controller import (
    GainSet,
    SecondDerivativeEstimator,
    apply_compensation,
    clamp_rate,
    control_rate,
    project_input,
)
from oracles import PRINTED_DKI, PRINTED_DKP, PRINTED_KI, PRINTED_KP

Z = np.zeros((2, 2))
vec = arrays(np.float64, 2, elements=st.floats(-100, 100, allow_nan=False))


def paper_gains():
    return GainSet(PRINTED_KP, PRINTED_KI, Z)


def test_zero_error_gives_zero_rate():
    np.testing.assert_array_equal(control_rate(paper_gains(), [0, 0], [0, 0], [0, 0]), [0.0, 0.0])


def test_printed_gains_rate():
    out = control_rate(paper_gains(), [0.1, 0.0], [0.0, 0.0], [0.0, 0.0])
    np.testing.assert_allclose(out, [0.20406, 0.0], atol=1e-12)


def test_permutation_gain():
    g = GainSet([[0, 1], [1, 0]], Z, Z)
    np.testing.assert_array_equal(control_rate(g, [0, 0], [3.0, -2.0], [0, 0]), [-2.0, 3.0])


def test_derivative_term():
    g = GainSet(Z, Z, 2 * np.eye(2))
    np.testing.assert_array_equal(control_rate(g, [0, 0], [0, 0], [1.0, -1.0]), [2.0, -2.0])


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        control_rate(paper_gains(), [0, 0, 0], [0, 0], [0, 0])
    with pytest.raises(ValueError):
        GainSet(np.eye(2), np.eye(3), Z)
    with pytest.raises(ValueError):
        apply_compensation(paper_gains(), np.zeros((2, 3)), Z)


def test_gains_must_be_finite():
    with pytest.raises(ValueError):
        GainSet([[np.inf, 0], [0, 0]], Z, Z)


@settings(max_examples=50, deadline=None)
@given(vec, vec, vec, vec, st.floats(-5, 5), st.floats(-5, 5))
def test_control_rate_is_linear(e1, e2, d1, d2, a, b):
    g = GainSet(PRINTED_KP + PRINTED_DKP, PRINTED_KI + PRINTED_DKI, np.eye(2))
    z = np.zeros(2)
    lhs = control_rate(g, a * e1 + b * e2, a * d1 + b * d2, z)
    rhs = a * control_rate(g, e1, d1, z) + b * control_rate(g, e2, d2, z)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9 * (1 + np.abs(lhs).max()))


def test_clamp_examples():
    box = (-np.ones(2), np.ones(2))
    np.testing.assert_array_equal(clamp_rate([2.0, 0.5], box), [1.0, 0.5])
    np.testing.assert_array_equal(clamp_rate([0.3, -0.9], box), [0.3, -0.9])
    np.testing.assert_array_equal(clamp_rate([-3.0, -0.2], box), [-1.0, -0.2])


@settings(max_examples=50, deadline=None)
@given(vec, vec)
def test_clamp_idempotent_and_nonexpansive(a, b):
    box = (np.array([-1.0, -15.0]), np.array([2.0, 15.0]))
    ca, cb = clamp_rate(a, box), clamp_rate(b, box)
    np.testing.assert_array_equal(clamp_rate(ca, box), ca)
    assert np.max(np.abs(ca - cb)) <= np.max(np.abs(a - b)) + 1e-12


def test_project_input():
    box = (np.array([-1.4, -3.0]), np.array([1.4, 9.0]))
    np.testing.assert_array_equal(project_input([2.0, -5.0], box), [1.4, -3.0])


def test_apply_compensation_examples():
    g = paper_gains()
    assert apply_compensation(g, Z, Z) == g
    out = apply_compensation(g, PRINTED_DKP, Z)
    np.testing.assert_allclose(out.K_p, [[0.6350, -0.7744], [7.2946, 5.1527]], atol=1e-12)
    np.testing.assert_array_equal(out.K_i, g.K_i)
    np.testing.assert_array_equal(out.K_d, g.K_d)
    back = apply_compensation(apply_compensation(g, PRINTED_DKP, PRINTED_DKI), -PRINTED_DKP, -PRINTED_DKI)
    np.testing.assert_allclose(back.K, g.K, atol=1e-15)


def test_stacked_round_trip():
    K = np.arange(8.0).reshape(2, 4)
    g = GainSet.from_stacked(K)
    np.testing.assert_array_equal(g.K, K)
    np.testing.assert_array_equal(g.K_p, [[0, 1], [4, 5]])
    assert not g.has_derivative
    assert GainSet.zeros(2, 2) == GainSet(Z, Z, Z)


def test_second_derivative_estimator():
    est = SecondDerivativeEstimator(dt=0.01, pole=0.0)
    np.testing.assert_array_equal(est.update([1.0, 0.0]), [0.0, 0.0])
    np.testing.assert_allclose(est.update([1.5, 0.1]), [50.0, 10.0])
    filt = SecondDerivativeEstimator(dt=0.01, pole=20.0)
    filt.update([0.0])
    out = [filt.update([0.02 * (k + 1)])[0] for k in range(500)]
    # constant slope of 2 per second: the filtered estimate settles on it
    assert out[0] < 2.0
    assert out[-1] == pytest.approx(2.0, rel=1e-9)
