"""Dense third-order tensors with a fixed element layout.

Element (i, j, k) (0-based here, 1-based in docs and files) lives at linear
offset i + I*j + I*J*k, i.e. first index fastest. Numpy's Fortran order is
exactly this layout, so every reshape in this module uses order='F'.

Mode-n matricization column orderings:
    X_(1): I x JK, column j + J*k
    X_(2): J x IK, column i + I*k
    X_(3): K x IJ, column i + I*j
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np

from core.errors import NonFiniteValueError, TensorShapeError

logger = logging.getLogger(__name__)

Dims = Tuple[int, int, int]


def _check_finite(values: np.ndarray):
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise NonFiniteValueError(int(bad[0]), float(values[bad[0]]))


def _check_dims(dims: Sequence[int]) -> Dims:
    if len(dims) != 3 or any(int(d) != d or d < 1 for d in dims):
        raise TensorShapeError(f"dims must be three positive integers, got {tuple(dims)}")
    return tuple(int(d) for d in dims)


@dataclass(frozen=True, eq=False)
class Tensor3:
    """Immutable I x J x K real tensor. `data` is a read-only float64 view."""
    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, order='F', copy=True)
        if arr.ndim != 3:
            raise TensorShapeError(f"expected a 3-way array, got ndim={arr.ndim}")
        _check_dims(arr.shape)
        _check_finite(arr.ravel(order='F'))
        arr.flags.writeable = False
        object.__setattr__(self, 'data', arr)

    @property
    def dims(self) -> Dims:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def values(self) -> np.ndarray:
        """Raw values in layout order"""
        return self.data.ravel(order='F')

    def __getitem__(self, index):
        return self.data[index]

    def __eq__(self, other):
        if not isinstance(other, Tensor3):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"Tensor3(dims={self.dims})"


def tensor_from_dense(dims: Sequence[int], values) -> Tensor3:
    """Build a tensor from a flat array given in layout order."""
    dims = _check_dims(dims)
    flat = np.asarray(values, dtype=np.float64).ravel()
    expected = dims[0] * dims[1] * dims[2]
    if flat.size != expected:
        raise TensorShapeError(f"dims {dims} need {expected} values, got {flat.size}")
    _check_finite(flat)
    return Tensor3(flat.reshape(dims, order='F'))


def tensor_from_array(array: np.ndarray) -> Tensor3:
    return Tensor3(np.asarray(array, dtype=np.float64))


def as_matrix(m) -> np.ndarray:
    """Validate a 2-D finite float64 array (the Matrix carrier)."""
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise TensorShapeError(f"expected a non-empty 2-D matrix, got shape {arr.shape}")
    _check_finite(arr.ravel(order='F'))
    return arr


def _check_mode(mode: int) -> int:
    if mode not in (1, 2, 3):
        raise TensorShapeError(f"mode must be 1, 2 or 3, got {mode!r}")
    return mode


def matricize(tensor: Tensor3, mode: int) -> np.ndarray:
    """Mode-n unfolding; mode is 1-based."""
    axis = _check_mode(mode) - 1
    moved = np.moveaxis(tensor.data, axis, 0)
    return moved.reshape((tensor.dims[axis], -1), order='F')


def matricized_shape(dims: Sequence[int], mode: int) -> Tuple[int, int]:
    dims = _check_dims(dims)
    axis = _check_mode(mode) - 1
    rest = dims[0] * dims[1] * dims[2] // dims[axis]
    return dims[axis], rest


def dematricize(matrix, mode: int, dims: Sequence[int]) -> Tensor3:
    """Exact inverse of `matricize`."""
    dims = _check_dims(dims)
    matrix = np.asarray(matrix, dtype=np.float64)
    expected = matricized_shape(dims, mode)
    if matrix.shape != expected:
        raise TensorShapeError(
            f"mode-{mode} unfolding of {dims} must be {expected}, got {matrix.shape}")
    axis = mode - 1
    moved_shape = (dims[axis],) + tuple(d for n, d in enumerate(dims) if n != axis)
    moved = matrix.reshape(moved_shape, order='F')
    return Tensor3(np.moveaxis(moved, 0, axis))


def frobenius_norm(tensor: Union[Tensor3, np.ndarray]) -> float:
    data = tensor.data if isinstance(tensor, Tensor3) else np.asarray(tensor)
    return float(np.linalg.norm(data.ravel()))


def vectorize(matrix) -> np.ndarray:
    """vec(M): columns stacked top to bottom."""
    return np.asarray(matrix, dtype=np.float64).ravel(order='F')


def write_tensor(tensor: Tensor3, path: Union[str, Path]):
    """Text format: `I J K` header, then values in layout order at 17 digits."""
    path = Path(path)
    I, J, K = tensor.dims
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(f"{I} {J} {K}\n")
        for value in tensor.values():
            f.write(f"{value:.17g}\n")
    logger.debug(f"Wrote tensor {tensor.dims} to {path}")


def read_tensor(path: Union[str, Path]) -> Tensor3:
    path = Path(path)
    tokens = path.read_text(encoding='utf-8').split()
    if len(tokens) < 3:
        raise TensorShapeError(f"{path}: missing 'I J K' header")
    try:
        dims = tuple(int(t) for t in tokens[:3])
        values = np.array([float(t) for t in tokens[3:]], dtype=np.float64)
    except ValueError as e:
        raise TensorShapeError(f"{path}: malformed tensor file ({e})") from e
    return tensor_from_dense(dims, values)
