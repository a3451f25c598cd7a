"""Kronecker family products and the BTD-(L,L,1) reconstruction."""

import numpy as np
import pytest

from core.errors import TensorShapeError
from core.products import (BlockFactors, btd_objective, cp_reconstruct, khatri_rao, kronecker,
                           mode3_design, partitioned_khatri_rao, reconstruct_btd)
from core.tensor import Tensor3, matricize, vectorize
from tests.conftest import random_factors


def _elementwise_btd(f: BlockFactors) -> np.ndarray:
    I, J, K = f.dims
    out = np.zeros((I, J, K))
    for r in range(f.R):
        e = f.block_e(r)
        for i in range(I):
            for j in range(J):
                for k in range(K):
                    out[i, j, k] += e[i, j] * f.C[k, r]
    return out


class TestKronecker:

    def test_definition(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[0.0, 1.0], [1.0, 0.0]])
        expected = np.zeros((4, 4))
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    for l in range(2):
                        expected[2 * i + k, 2 * j + l] = a[i, j] * b[k, l]
        np.testing.assert_array_equal(kronecker(a, b), expected)

    def test_mixed_product(self, rng):
        a, b = rng.standard_normal((3, 4)), rng.standard_normal((2, 5))
        c, d = rng.standard_normal((4, 2)), rng.standard_normal((5, 3))
        np.testing.assert_allclose(kronecker(a, b) @ kronecker(c, d), kronecker(a @ c, b @ d),
                                   rtol=1e-12, atol=1e-12)


class TestKhatriRao:

    def test_example(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_array_equal(khatri_rao(a, b),
                                      [[0, 2], [1, 0], [0, 4], [3, 0]])

    def test_column_mismatch(self):
        with pytest.raises(TensorShapeError):
            khatri_rao(np.ones((2, 2)), np.ones((2, 3)))

    def test_partitioned_blocks(self, rng):
        K, J, L, R = 4, 3, 2, 3
        c, b = rng.standard_normal((K, R)), rng.standard_normal((J, L * R))
        out = partitioned_khatri_rao(c, b, R)
        assert out.shape == (K * J, L * R)
        for r in range(R):
            np.testing.assert_array_equal(out[:, r * L:(r + 1) * L],
                                          np.kron(c[:, [r]], b[:, r * L:(r + 1) * L]))

    def test_partitioned_with_unit_blocks_is_khatri_rao(self, rng):
        x, y = rng.standard_normal((3, 4)), rng.standard_normal((5, 4))
        np.testing.assert_allclose(partitioned_khatri_rao(x, y, 4), khatri_rao(x, y))

    def test_non_uniform_blocks_rejected(self):
        with pytest.raises(TensorShapeError):
            partitioned_khatri_rao(np.ones((2, 3)), np.ones((2, 4)), 2)


class TestMode3Design:

    def test_columns_are_vectorized_blocks(self, rng):
        f = random_factors(rng, (3, 3, 2), L=2, R=3)
        m3 = mode3_design(f.A, f.B, f.L, f.R)
        assert m3.shape == (9, 3)
        for r in range(f.R):
            np.testing.assert_allclose(m3[:, r], vectorize(f.block_e(r)), rtol=1e-14)

    def test_equals_partitioned_product_times_ones(self, rng):
        f = random_factors(rng, (4, 5, 2), L=3, R=2)
        m3 = mode3_design(f.A, f.B, f.L, f.R)
        for r in range(f.R):
            kr = khatri_rao(f.block_b(r), f.block_a(r))
            np.testing.assert_allclose(m3[:, r], kr @ np.ones(f.L), rtol=1e-12, atol=1e-14)


class TestReconstruction:

    def test_matches_elementwise_sum(self, rng):
        f = random_factors(rng, (4, 5, 6), L=2, R=3)
        np.testing.assert_allclose(reconstruct_btd(f).data, _elementwise_btd(f),
                                   rtol=1e-13, atol=1e-13)

    @pytest.mark.parametrize('dims', [(3, 4, 5), (5, 6, 7), (10, 15, 28)])
    @pytest.mark.parametrize('L', [1, 2, 3])
    @pytest.mark.parametrize('R', [1, 2, 3])
    def test_matricized_identities(self, rng, dims, L, R):
        f = random_factors(rng, dims, L, R)
        x = reconstruct_btd(f)
        scale = np.linalg.norm(x.data)
        expected = {
            1: f.A @ partitioned_khatri_rao(f.C, f.B, R).T,
            2: f.B @ partitioned_khatri_rao(f.C, f.A, R).T,
            3: f.C @ mode3_design(f.A, f.B, L, R).T,
        }
        for mode, unfolded in expected.items():
            assert np.linalg.norm(matricize(x, mode) - unfolded) <= 1e-12 * scale

    def test_rank_one_blocks_reduce_to_cp(self, rng):
        a, b, c = rng.standard_normal((4, 3)), rng.standard_normal((5, 3)), rng.standard_normal((6, 3))
        f = BlockFactors(A=a, B=b, C=c, L=1, R=3)
        expected = np.zeros((4, 5, 6))
        for r in range(3):
            for i in range(4):
                for j in range(5):
                    for k in range(6):
                        expected[i, j, k] += a[i, r] * b[j, r] * c[k, r]
        np.testing.assert_allclose(reconstruct_btd(f).data, expected, rtol=1e-13, atol=1e-13)
        np.testing.assert_allclose(cp_reconstruct(a, b, c).data, expected, rtol=1e-13, atol=1e-13)

    def test_dims_mismatch(self, make_factors):
        with pytest.raises(TensorShapeError):
            reconstruct_btd(make_factors(dims=(4, 5, 6)), dims=(4, 5, 7))


class TestObjective:

    def test_exact_model_is_zero(self, make_factors):
        f = make_factors()
        assert btd_objective(reconstruct_btd(f), f) == pytest.approx(0.0, abs=1e-20)

    def test_matches_elementwise_residual(self, rng, make_factors):
        f = make_factors()
        t = Tensor3(rng.standard_normal(f.dims))
        residual = t.data - _elementwise_btd(f)
        assert btd_objective(t, f) == pytest.approx(float((residual ** 2).sum()), rel=1e-13)


class TestBlockFactors:

    def test_validates_column_counts(self):
        with pytest.raises(TensorShapeError):
            BlockFactors(A=np.ones((3, 4)), B=np.ones((4, 4)), C=np.ones((5, 3)), L=2, R=2)

    def test_vector_round_trip(self, make_factors):
        f = make_factors()
        g = BlockFactors.from_vector(f.as_vector(), f.dims, f.L, f.R)
        np.testing.assert_array_equal(g.A, f.A)
        np.testing.assert_array_equal(g.B, f.B)
        np.testing.assert_array_equal(g.C, f.C)

    def test_block_accessors(self, make_factors):
        f = make_factors(dims=(4, 5, 6), L=2, R=3)
        assert f.block_a(1).shape == (4, 2)
        assert f.block_b(2).shape == (5, 2)
        np.testing.assert_array_equal(f.block_a(1), f.A[:, 2:4])
        assert f.block_ranks() == [(2, 2)] * 3
