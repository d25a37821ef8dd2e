import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from logitclip.errors import ConfigError, DimensionError
from logitclip.numerics import Rng, log_softmax, log_sum_exp, pnorm, softmax_jacobian, stable_softmax

finite = st.floats(-1e3, 1e3, allow_nan=False)
vectors = arrays(np.float64, st.integers(1, 12), elements=finite)


def test_log_sum_exp_examples():
    assert log_sum_exp([0.0, 0.0]) == pytest.approx(np.log(2), abs=1e-15)
    assert log_sum_exp([1000.0, 1000.0]) == pytest.approx(1000 + np.log(2), abs=1e-12)
    assert log_sum_exp([0.0, np.log(3)]) == pytest.approx(np.log(4), abs=1e-15)


def test_log_sum_exp_empty_raises():
    with pytest.raises(DimensionError):
        log_sum_exp([])


def test_log_sum_exp_exact_for_constant_vectors():
    for c in (-700.0, 0.0, 3.25, 1e4):
        assert log_sum_exp(np.full(4, c)) == c + np.log(4)


@given(vectors, st.floats(-1e3, 1e3))
def test_log_sum_exp_shift(v, c):
    assert abs(log_sum_exp(v + c) - (log_sum_exp(v) + c)) <= 1e-12 * max(1.0, abs(c), np.max(np.abs(v)))


def test_log_sum_exp_batch_matches_rows():
    v = np.random.default_rng(1).normal(size=(5, 7))
    np.testing.assert_allclose(log_sum_exp(v), [log_sum_exp(r) for r in v], rtol=0, atol=1e-14)


def test_softmax_examples():
    np.testing.assert_allclose(stable_softmax([0.0, 0.0, 0.0]), [1 / 3] * 3, atol=1e-15)
    np.testing.assert_allclose(stable_softmax(np.log([1.0, 2.0, 3.0])), [1 / 6, 2 / 6, 3 / 6], atol=1e-15)
    p = stable_softmax([500.0, 0.0])
    assert np.all(np.isfinite(p))
    assert p[0] == pytest.approx(1.0)
    assert p[1] == pytest.approx(np.exp(-500), rel=1e-12)


def test_softmax_sums_to_one_on_wide_range():
    z = np.random.default_rng(0).uniform(-1e3, 1e3, size=(10_000, 10))
    p = stable_softmax(z)
    assert np.max(np.abs(p.sum(axis=1) - 1)) <= 1e-12
    assert np.all(p >= 0) and np.all(p <= 1)


# 1 - e^-30 is still representable, so strict interior is checkable here
@given(arrays(np.float64, st.integers(2, 10), elements=st.floats(-15, 15)), st.floats(-100, 100))
def test_softmax_shift_invariant_and_interior(z, c):
    p = stable_softmax(z)
    assert np.all(p > 0) and np.all(p < 1)
    np.testing.assert_allclose(stable_softmax(z + c), p, rtol=1e-10, atol=1e-15)


def test_log_softmax_consistent():
    z = np.random.default_rng(2).normal(size=(4, 6)) * 5
    np.testing.assert_allclose(np.exp(log_softmax(z)), stable_softmax(z), rtol=1e-13)


def test_pnorm_examples():
    assert pnorm([3.0, 4.0], 2) == 5.0
    assert pnorm([3.0, -4.0], 1) == 7.0
    assert pnorm([3.0, -4.0], np.inf) == 4.0
    assert pnorm([3.0, -4.0], "inf") == 4.0
    assert pnorm([0.0, 0.0], 2) == 0.0


@pytest.mark.parametrize("p", [0, 3, -1, "two", 0.5])
def test_pnorm_rejects_unsupported_order(p):
    with pytest.raises(ConfigError):
        pnorm([1.0, 2.0], p)


@settings(max_examples=200)
@given(arrays(np.float64, 5, elements=finite), arrays(np.float64, 5, elements=finite),
       st.floats(-50, 50), st.sampled_from([1, 2, np.inf]))
def test_pnorm_triangle_and_homogeneity(a, b, c, p):
    assert pnorm(a + b, p) <= pnorm(a, p) + pnorm(b, p) + 1e-9
    assert pnorm(c * a, p) == pytest.approx(abs(c) * pnorm(a, p), rel=1e-12, abs=1e-9)
    assert (pnorm(a, p) == 0) == (not np.any(a))


def test_softmax_jacobian_examples():
    np.testing.assert_allclose(softmax_jacobian([0.5, 0.5]), [[0.25, -0.25], [-0.25, 0.25]])
    np.testing.assert_array_equal(softmax_jacobian([0.0, 1.0, 0.0]), np.zeros((3, 3)))


def test_softmax_jacobian_symmetric_rows_sum_to_zero():
    rng = np.random.default_rng(3)
    for _ in range(50):
        p = stable_softmax(rng.normal(size=6) * 3)
        j = softmax_jacobian(p)
        np.testing.assert_allclose(j, j.T, atol=0)
        np.testing.assert_allclose(j @ np.ones(6), 0, atol=1e-15)


def test_softmax_jacobian_matches_finite_differences():
    z = np.array([0.3, -1.2, 2.0, 0.1])
    h = 1e-6
    num = np.column_stack([(stable_softmax(z + h * e) - stable_softmax(z - h * e)) / (2 * h) for e in np.eye(4)])
    np.testing.assert_allclose(softmax_jacobian(stable_softmax(z)), num, atol=1e-9)


def test_rng_reproducible_and_split_independent():
    a = Rng(42).split("noise").gen.random(1000)
    b = Rng(42).split("noise").gen.random(1000)
    np.testing.assert_array_equal(a, b)
    c = Rng(42).split("init").gen.random(1000)
    assert not np.array_equal(a, c)
    assert not np.array_equal(Rng(42).gen.random(10), Rng(43).gen.random(10))


def test_rng_split_is_order_independent():
    r = Rng(7)
    first = r.split("a").gen.random(5)
    _ = r.split("b").gen.random(100)
    _ = r.gen.random(100)
    np.testing.assert_array_equal(first, Rng(7).split("a").gen.random(5))


def test_rng_nested_split_differs_from_flat():
    x = Rng(0).split("a").split("b").gen.random(8)
    y = Rng(0).split("b").split("a").gen.random(8)
    assert not np.array_equal(x, y)


@pytest.mark.parametrize("seed", [-1, 2**64])
def test_rng_rejects_out_of_range_seed(seed):
    with pytest.raises(ConfigError):
        Rng(seed)


def test_rng_accepts_full_64_bit_range():
    Rng(2**64 - 1).gen.random()
