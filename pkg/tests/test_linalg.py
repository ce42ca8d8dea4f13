import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisecorr.linalg import (
    SingularMatrixError,
    dense_matrix,
    dense_vector,
    log_sum_exp,
    matvec,
    one_norm,
    softmax,
    solve_or_invert,
)


class TestMatvec:
    def test_identity(self):
        v = dense_vector([1.0, 2.0, 3.0])
        np.testing.assert_array_equal(matvec(np.eye(3), v), v)

    def test_hand_arithmetic(self):
        m = dense_matrix([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(matvec(m, dense_vector([1.0, 1.0])), [3.0, 7.0])

    def test_zero_matrix_annihilates(self):
        v = dense_vector([5.0, -2.0, 0.5])
        np.testing.assert_array_equal(matvec(np.zeros((2, 3)), v), [0.0, 0.0])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            matvec(np.eye(3), dense_vector([1.0, 2.0]))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_linearity(self, seed):
        rng = np.random.default_rng(seed)
        m = rng.uniform(-10, 10, (4, 5))
        u = rng.uniform(-10, 10, 5)
        v = rng.uniform(-10, 10, 5)
        a, b = rng.uniform(-10, 10, 2)
        left = matvec(m, a * u + b * v)
        right = a * matvec(m, u) + b * matvec(m, v)
        np.testing.assert_allclose(left, right, atol=1e-10)


class TestSolveOrInvert:
    def test_identity(self):
        inv = solve_or_invert(np.eye(4))
        np.testing.assert_array_equal(inv.matrix, np.eye(4))
        assert inv.condition == 1.0

    def test_two_by_two_closed_form(self):
        # Oracle: inverse of [[a, b], [c, d]] is [[d, -b], [-c, a]] / det.
        m = np.array([[0.8, 0.2], [0.2, 0.8]])
        expected = np.array([[0.8, -0.2], [-0.2, 0.8]]) / 0.6
        inv = solve_or_invert(m)
        np.testing.assert_allclose(inv.matrix, expected, atol=1e-14)

    def test_rank_one_is_singular(self):
        with pytest.raises(SingularMatrixError) as exc:
            solve_or_invert(np.array([[1.0, 1.0], [1.0, 1.0]]))
        assert exc.value.condition == np.inf

    def test_near_singular_carries_condition(self):
        m = np.array([[1.0, 1.0], [1.0, 1.0 + 1e-14]])
        with pytest.raises(SingularMatrixError) as exc:
            solve_or_invert(m)
        assert exc.value.condition > 1e12

    def test_non_square_rejected(self):
        with pytest.raises(ValueError, match="square"):
            solve_or_invert(np.ones((2, 3)))

    def test_residual_bound_for_well_conditioned(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = rng.integers(2, 9)
            m = rng.standard_normal((n, n)) + n * np.eye(n)
            inv = solve_or_invert(m)
            if inv.condition >= 1e6:
                continue
            residual = np.abs(m @ inv.matrix - np.eye(n)).max()
            assert residual < 1e-8

    def test_condition_is_one_norm_product(self):
        rng = np.random.default_rng(3)
        m = rng.standard_normal((5, 5)) + 5 * np.eye(5)
        inv = solve_or_invert(m)
        assert inv.condition == pytest.approx(one_norm(m) * one_norm(inv.matrix))


class TestSoftmax:
    def test_uniform_on_equal_logits(self):
        np.testing.assert_allclose(softmax(np.zeros(3)), np.full(3, 1 / 3), rtol=1e-15)

    def test_large_gap_no_overflow(self):
        p = softmax(np.array([1000.0, 0.0]))
        assert np.isfinite(p).all()
        assert p[0] == pytest.approx(1.0)
        assert p[1] == pytest.approx(0.0, abs=1e-300)

    def test_exact_exponential_ratios(self):
        p = softmax(np.log(np.array([1.0, 2.0, 3.0])))
        np.testing.assert_allclose(p, [1 / 6, 2 / 6, 3 / 6], atol=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=12),
    )
    def test_simplex_output(self, entries):
        z = np.array(entries)
        p = softmax(z)
        assert not np.isnan(p).any()
        assert (p >= 0).all() and (p <= 1.0).all()
        assert abs(p.sum() - 1.0) < 1e-12
        if z.max() - z.min() < 700:  # beyond this exp underflows to exact 0
            assert (p > 0).all()

    def test_batched_rows_sum_to_one(self):
        z = np.random.default_rng(1).uniform(-50, 50, (64, 7))
        p = softmax(z)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


class TestLogSumExp:
    def test_two_zeros(self):
        assert log_sum_exp(np.zeros(2)) == pytest.approx(math.log(2), abs=1e-15)

    def test_singleton_identity(self):
        assert log_sum_exp(np.array([-3.7])) == pytest.approx(-3.7, abs=1e-15)

    def test_direct_evaluation(self):
        # Direct (unshifted) evaluation is safe at this scale.
        expected = math.log(math.exp(1) + math.exp(2) + math.exp(3))
        got = log_sum_exp(np.array([1.0, 2.0, 3.0]))
        assert got == pytest.approx(expected, abs=1e-12)
        assert got == pytest.approx(3.40760596, abs=1e-8)

    def test_shifted_stability(self):
        assert log_sum_exp(np.array([1e4, 1e4])) == pytest.approx(1e4 + math.log(2))


class TestConstructors:
    def test_dense_matrix_rejects_nan(self):
        with pytest.raises(ValueError, match="finite"):
            dense_matrix([[1.0, np.nan]])

    def test_dense_matrix_flat_shape(self):
        m = dense_matrix([1, 2, 3, 4, 5, 6], rows=2, cols=3)
        assert m.shape == (2, 3)
        assert m[1, 0] == 4.0

    def test_dense_matrix_row_major(self):
        m = dense_matrix([[1.0, 2.0], [3.0, 4.0]])
        assert m.flags["C_CONTIGUOUS"]
        np.testing.assert_array_equal(m.ravel(order="K"), [1.0, 2.0, 3.0, 4.0])

    def test_dense_vector_rejects_matrix(self):
        with pytest.raises(ValueError, match="1-D"):
            dense_vector([[1.0]])

    def test_dense_vector_rejects_inf(self):
        with pytest.raises(ValueError, match="finite"):
            dense_vector([np.inf])
