import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from avsr.numerics import derive_rng, log_softmax, log_sum_exp, make_rng, matmul, safe_log, sigmoid, softmax, softmax_row

finite = st.floats(-50, 50, allow_nan=False)


def test_matmul_identity_and_hand_product():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(np.eye(2), a), a)
    assert matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]])).tolist() == [[11.0]]


def test_matmul_matches_triple_loop(rng):
    a, b = rng.normal(size=(5, 7)), rng.normal(size=(7, 3))
    ref = np.zeros((5, 3))
    for i in range(5):
        for j in range(3):
            for k in range(7):
                ref[i, j] += a[i, k] * b[k, j]
    assert np.max(np.abs(matmul(a, b) - ref)) < 1e-12


def test_matmul_dimension_mismatch():
    with pytest.raises(ValueError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_associative(rng):
    a, b, c = rng.normal(size=(3, 4)), rng.normal(size=(4, 5)), rng.normal(size=(5, 2))
    assert np.allclose(matmul(matmul(a, b), c), matmul(a, matmul(b, c)), atol=1e-10)


def test_softmax_row_cases():
    assert np.allclose(softmax_row([0.0, 0.0]), [0.5, 0.5])
    out = softmax_row([1000.0, 0.0])
    assert out[0] == pytest.approx(1.0) and out[1] < 1e-300 and np.all(np.isfinite(out))
    with pytest.raises(ValueError):
        softmax_row([])


@given(arrays(np.float64, st.integers(1, 12), elements=finite), finite)
def test_softmax_row_normalised_and_shift_invariant(x, c):
    p = softmax_row(x)
    assert np.all(p > 0)
    assert abs(p.sum() - 1.0) < 1e-12
    assert np.allclose(softmax_row(x + c), p, atol=1e-12)


def test_softmax_matrix_agrees_with_rows(rng):
    z = rng.normal(size=(6, 5)) * 10
    assert np.allclose(softmax(z), np.array([softmax_row(r) for r in z]))
    assert np.allclose(np.exp(log_softmax(z)), softmax(z))


def test_log_sum_exp_cases(rng):
    assert log_sum_exp([np.log(0.5), np.log(0.5)]) == pytest.approx(0.0, abs=1e-15)
    assert log_sum_exp([-np.inf, 1.5]) == 1.5
    assert log_sum_exp([-np.inf, -np.inf]) == -np.inf
    v = rng.normal(size=10)
    assert abs(log_sum_exp(v) - np.log(np.exp(v).sum())) < 1e-12


def test_rng_reproducible():
    assert np.array_equal(make_rng(5).normal(size=8), make_rng(5).normal(size=8))
    assert np.array_equal(derive_rng(5, "a", 2).normal(size=4), derive_rng(5, "a", 2).normal(size=4))
    assert not np.array_equal(derive_rng(5, "a").normal(size=4), derive_rng(5, "b").normal(size=4))


def test_sigmoid_and_safe_log():
    assert sigmoid(0.0) == 0.5
    assert np.isfinite(sigmoid(np.array([-800.0, 800.0]))).all()
    assert safe_log(np.array([0.0]))[0] == pytest.approx(np.log(1e-12))
