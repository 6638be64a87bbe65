import numpy as np
import pytest

from ocdm.core import (
    Arrival,
    ConfigurationError,
    DualPair,
    Prediction,
    decision_cost,
    unvec_pair,
    vec_pair,
)


def dual(lam, theta):
    return DualPair(np.asarray(lam, float), np.asarray(theta, float))


def test_zero_consumption_leaves_reward_unchanged():
    mu = Prediction([1.0, 2.0], np.zeros((2, 1)))
    out = decision_cost(mu, dual([0.3], [0.4]), zeta=1.0)
    assert np.array_equal(out.c, [1.0, 2.0])


def test_scalar_example():
    mu = Prediction([1.0], [[1.0]])
    out = decision_cost(mu, dual([-1.0], [0.0]), zeta=1.0)
    assert np.array_equal(out.c, [2.0])


def test_hand_derived_matrix_example():
    # r - V (lam + zeta theta) cross-checked by explicit matrix arithmetic
    r = np.array([1.0, 0.0])
    V = np.array([[1.0, 0.0], [0.0, 1.0]])
    omega = dual([0.0, 0.0], [0.6, 0.8])
    out = decision_cost(Prediction(r, V), omega, zeta=2.0)
    expected = r - V @ (omega.lam + 2.0 * omega.theta)
    assert np.allclose(out.c, [-0.2, -1.6])
    assert np.array_equal(out.c, expected)


def test_linearity_in_prediction():
    rng = np.random.default_rng(1)
    for _ in range(50):
        d, m = rng.integers(1, 6), rng.integers(1, 5)
        omega = dual(rng.normal(size=m), rng.normal(size=m))
        zeta = float(rng.uniform(0.1, 3))
        a, b = rng.normal(), rng.normal()
        r1, V1 = rng.normal(size=d), rng.normal(size=(d, m))
        r2, V2 = rng.normal(size=d), rng.normal(size=(d, m))
        combo = decision_cost(Prediction(a * r1 + b * r2, a * V1 + b * V2), omega, zeta)
        c1 = decision_cost(Prediction(r1, V1), omega, zeta)
        c2 = decision_cost(Prediction(r2, V2), omega, zeta)
        assert np.allclose(combo.c, a * c1.c + b * c2.c, atol=1e-10)


def test_zero_duals_return_reward_exactly():
    rng = np.random.default_rng(2)
    for _ in range(20):
        d, m = rng.integers(1, 6), rng.integers(1, 5)
        r, V = rng.normal(size=d), rng.normal(size=(d, m))
        out = decision_cost(Prediction(r, V), dual(np.zeros(m), np.zeros(m)), 1.0)
        assert np.array_equal(out.c, r)


def test_accepts_arrival_input():
    arr = Arrival(np.zeros(2), [1.0], [[2.0]])
    out = decision_cost(arr, dual([1.0], [0.0]), zeta=1.0)
    assert np.array_equal(out.c, [-1.0])


def test_dimension_mismatch_raises():
    mu = Prediction([1.0, 2.0], np.zeros((2, 3)))
    with pytest.raises(ConfigurationError):
        decision_cost(mu, dual([0.0], [0.0]), zeta=1.0)
    with pytest.raises(ConfigurationError):
        decision_cost(mu, dual(np.zeros(3), np.zeros(3)), zeta=-1.0)


def test_nonfinite_entries_rejected():
    with pytest.raises(ConfigurationError):
        Prediction([np.nan], [[1.0]])
    with pytest.raises(ConfigurationError):
        Arrival([np.inf], [1.0], [[1.0]])


def test_arrival_dim_check():
    arr = Arrival(np.zeros(3), np.ones(2), np.ones((2, 4)))
    arr.check_dims(3, 2, 4)
    with pytest.raises(ConfigurationError):
        arr.check_dims(3, 2, 5)


def test_vec_roundtrip_is_column_stacked():
    r = np.array([1.0, 2.0])
    V = np.array([[3.0, 5.0], [4.0, 6.0]])
    flat = vec_pair(r, V)
    # rewards first, then V column by column
    assert np.array_equal(flat, [1, 2, 3, 4, 5, 6])
    r2, V2 = unvec_pair(flat, 2, 2)
    assert np.array_equal(r2, r)
    assert np.array_equal(V2, V)
