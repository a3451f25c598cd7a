"""Layout, unfolding and text round trip of Tensor3."""

import numpy as np
import pytest

from core.errors import NonFiniteValueError, TensorShapeError
from core.tensor import (Tensor3, dematricize, frobenius_norm, matricize, matricized_shape,
                         read_tensor, tensor_from_array, tensor_from_dense, vectorize,
                         write_tensor)


class TestLayout:

    def test_first_index_fastest(self):
        t = tensor_from_dense((2, 3, 4), np.arange(24))
        for i in range(2):
            for j in range(3):
                for k in range(4):
                    assert t[i, j, k] == i + 2 * j + 6 * k

    def test_values_round_trip(self):
        values = np.arange(60.0)
        t = tensor_from_dense((3, 4, 5), values)
        np.testing.assert_array_equal(t.values(), values)

    def test_wrong_length_rejected(self):
        with pytest.raises(TensorShapeError):
            tensor_from_dense((2, 2, 2), np.arange(7))

    @pytest.mark.parametrize('dims', [(0, 2, 2), (2, 2), (2, -1, 3)])
    def test_bad_dims_rejected(self, dims):
        with pytest.raises(TensorShapeError):
            tensor_from_dense(dims, [])

    def test_non_finite_reports_offset(self):
        values = np.zeros(8)
        values[5] = np.nan
        with pytest.raises(NonFiniteValueError) as info:
            tensor_from_dense((2, 2, 2), values)
        assert info.value.index == 5

    def test_data_is_read_only(self):
        t = tensor_from_array(np.ones((2, 2, 2)))
        with pytest.raises(ValueError):
            t.data[0, 0, 0] = 3.0

    def test_equality(self):
        a = tensor_from_array(np.ones((2, 3, 4)))
        assert a == tensor_from_dense((2, 3, 4), np.ones(24))
        assert a != tensor_from_array(np.ones((3, 2, 4)))


class TestMatricize:

    def test_column_ordering(self, rng):
        I, J, K = 3, 4, 5
        t = Tensor3(rng.standard_normal((I, J, K)))
        x1, x2, x3 = (matricize(t, n) for n in (1, 2, 3))
        for i in range(I):
            for j in range(J):
                for k in range(K):
                    assert x1[i, j + J * k] == t[i, j, k]
                    assert x2[j, i + I * k] == t[i, j, k]
                    assert x3[k, i + I * j] == t[i, j, k]

    def test_shapes(self):
        assert matricized_shape((3, 4, 5), 1) == (3, 20)
        assert matricized_shape((3, 4, 5), 2) == (4, 15)
        assert matricized_shape((3, 4, 5), 3) == (5, 12)

    @pytest.mark.parametrize('mode', [1, 2, 3])
    def test_dematricize_inverts(self, rng, mode):
        t = Tensor3(rng.standard_normal((3, 4, 5)))
        assert dematricize(matricize(t, mode), mode, t.dims) == t

    def test_dematricize_shape_mismatch(self):
        with pytest.raises(TensorShapeError):
            dematricize(np.zeros((3, 19)), 1, (3, 4, 5))

    def test_invalid_mode(self):
        with pytest.raises(TensorShapeError):
            matricize(Tensor3(np.zeros((2, 2, 2))), 4)

    def test_vectorize_stacks_columns(self):
        m = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(vectorize(m), [1.0, 3.0, 2.0, 4.0])


class TestNorm:

    def test_matches_raw_values(self, rng):
        t = Tensor3(rng.standard_normal((4, 5, 6)))
        assert frobenius_norm(t) == pytest.approx(np.linalg.norm(t.values()), rel=1e-15)

    @pytest.mark.parametrize('mode', [1, 2, 3])
    def test_invariant_under_unfolding(self, rng, mode):
        t = Tensor3(rng.standard_normal((4, 5, 6)))
        assert frobenius_norm(matricize(t, mode)) == pytest.approx(frobenius_norm(t), rel=1e-15)


class TestTextFormat:

    def test_round_trip_is_exact(self, rng, tmp_path):
        t = Tensor3(rng.standard_normal((2, 3, 4)))
        path = tmp_path / 'tensor.txt'
        write_tensor(t, path)
        assert path.read_text().splitlines()[0] == '2 3 4'
        assert read_tensor(path) == t

    def test_truncated_file(self, tmp_path):
        path = tmp_path / 'bad.txt'
        path.write_text('2 2 2\n1\n2\n')
        with pytest.raises(TensorShapeError):
            read_tensor(path)
