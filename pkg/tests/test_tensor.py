import numpy as np
import pytest

from fastrpe.core.tensor import (
    RngState, as_mat, gaussian_matrix, matmul, numerical_rank, orthogonal_block_sample, row_l2_normalize,
    row_l2_normalize_vjp, unit_sphere_rows,
)
from fastrpe.shared.errors import PreconditionError, ShapeError


class TestRngState:
    def test_same_seed_same_stream(self):
        np.testing.assert_array_equal(RngState(7).normal(100), RngState(7).normal(100))

    def test_children_are_repeatable_and_distinct(self):
        root = RngState(7)
        np.testing.assert_array_equal(root.child(1, 2).normal(10), root.child(1, 2).normal(10))
        assert not np.allclose(root.child(1).normal(10), root.child(2).normal(10))

    def test_child_does_not_depend_on_parent_draws(self):
        a = RngState(3)
        a.normal(1000)
        np.testing.assert_array_equal(a.child(4).normal(5), RngState(3).child(4).normal(5))

    def test_normal_moments(self):
        x = RngState(11).normal(200_000)
        assert abs(x.mean()) < 0.01
        assert abs(x.var() - 1.0) < 0.02

    def test_odd_count_and_shape(self, rng):
        assert rng.normal(7).shape == (7,)
        assert rng.normal((3, 5)).shape == (3, 5)

    def test_integer_stream_is_bit_identical(self):
        a, b = RngState(42).integers(64), RngState(42).integers(64)
        assert a.dtype == np.int64
        assert a.tobytes() == b.tobytes()
        assert np.all(a >= 0)
        assert not np.array_equal(a, RngState(43).integers(64))

    def test_uniform_range(self):
        u = RngState(8).uniform(10_000)
        assert u.min() >= 0.0 and u.max() < 1.0
        assert abs(u.mean() - 0.5) < 0.01

    def test_normal_is_box_muller_of_uniform(self):
        u1, u2 = RngState(5).uniform(2)
        expected = np.sqrt(-2.0 * np.log(1.0 - u1)) * np.array([np.cos(2 * np.pi * u2), np.sin(2 * np.pi * u2)])
        np.testing.assert_allclose(RngState(5).normal(2), expected, rtol=1e-14)


class TestShapes:
    def test_as_mat_rejects_vectors(self):
        with pytest.raises(ShapeError):
            as_mat(np.zeros(3))

    def test_as_mat_keeps_float32(self):
        assert as_mat(np.zeros((2, 2), dtype=np.float32)).dtype == np.float32
        assert as_mat([[1, 2]]).dtype == np.float64

    def test_matmul_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_matmul_small_cases(self, rng):
        m = rng.normal((3, 4))
        np.testing.assert_array_equal(matmul(np.eye(3), m), m)
        np.testing.assert_array_equal(matmul([[2.0]], [[3.0]]), [[6.0]])

    def test_matmul_matches_triple_loop(self, rng):
        a, b = rng.normal((5, 4)), rng.normal((4, 3))
        expected = np.zeros((5, 3))
        for i in range(5):
            for j in range(3):
                for k in range(4):
                    expected[i, j] += a[i, k] * b[k, j]
        np.testing.assert_allclose(matmul(a, b), expected, rtol=0, atol=1e-12)

    def test_matmul_is_associative(self, rng):
        a, b, c = rng.normal((6, 5)), rng.normal((5, 7)), rng.normal((7, 4))
        left, right = matmul(matmul(a, b), c), matmul(a, matmul(b, c))
        assert np.max(np.abs(left - right)) <= 1e-9 * np.max(np.abs(left))


    def test_gaussian_matrix_needs_positive_dims(self, rng):
        with pytest.raises(PreconditionError):
            gaussian_matrix(rng, 0, 3)


class TestNormalize:
    def test_unit_sphere_rows(self, rng):
        rows = unit_sphere_rows(rng, 50, 6)
        np.testing.assert_allclose(np.linalg.norm(rows, axis=1), 1.0, rtol=1e-12)

    def test_zero_row_stays_zero(self):
        out = row_l2_normalize(np.array([[0.0, 0.0], [3.0, 4.0]]))
        np.testing.assert_array_equal(out[0], [0.0, 0.0])
        np.testing.assert_allclose(out[1], [0.6, 0.8])

    def test_vjp_matches_finite_differences(self, rng):
        m = gaussian_matrix(rng, 4, 3)
        g = gaussian_matrix(rng, 4, 3)
        analytic = row_l2_normalize_vjp(m, g)
        numeric = np.zeros_like(m)
        h = 1e-6
        for idx in np.ndindex(m.shape):
            up, down = m.copy(), m.copy()
            up[idx] += h
            down[idx] -= h
            numeric[idx] = np.sum(g * (row_l2_normalize(up) - row_l2_normalize(down))) / (2 * h)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-8)


class TestOrthogonalBlocks:
    def test_rows_orthogonal_within_block(self, rng):
        w = orthogonal_block_sample(rng, 10, 4)
        assert w.shape == (10, 4)
        for start in (0, 4, 8):
            block = w[start:start + 4]
            unit = block / np.linalg.norm(block, axis=1, keepdims=True)
            gram = unit @ unit.T
            np.testing.assert_allclose(gram, np.eye(len(block)), atol=1e-10)

    def test_row_norms_follow_chi(self):
        w = orthogonal_block_sample(RngState(5), 4000, 8)
        # E|g|^2 = d for g ~ N(0, I_d)
        assert abs(np.mean(np.sum(w * w, axis=1)) - 8.0) < 0.3


class TestNumericalRank:
    def test_identity_and_zero(self):
        assert numerical_rank(np.eye(6)) == 6
        assert numerical_rank(np.zeros((4, 4))) == 0

    def test_outer_product(self, rng):
        u, v = rng.normal(5), rng.normal(7)
        assert numerical_rank(np.outer(u, v)) == 1

    def test_matches_svd_rank(self, rng):
        low = gaussian_matrix(rng, 8, 3) @ gaussian_matrix(rng, 3, 8)
        assert numerical_rank(low) == np.linalg.matrix_rank(low) == 3

    def test_bad_tolerance(self):
        with pytest.raises(PreconditionError):
            numerical_rank(np.eye(2), tol_scale=0.0)

    def test_random_square_is_full_rank(self, rng):
        m = gaussian_matrix(rng, 8, 8)
        assert abs(np.linalg.det(m)) > 1e-6
        assert numerical_rank(m) == 8

    @pytest.mark.parametrize("inner", [2, 5, 9])
    def test_product_rank_bounded_by_factors(self, inner):
        rng = RngState(inner)
        a = gaussian_matrix(rng, 9, inner) @ gaussian_matrix(rng, inner, 7)
        b = gaussian_matrix(rng, 7, 4) @ gaussian_matrix(rng, 4, 8)
        assert numerical_rank(a @ b) <= min(numerical_rank(a), numerical_rank(b))
