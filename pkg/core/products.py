"""Structured products and the BTD-(L,L,1) model.

A BTD-(L,L,1) with R terms is carried by partitioned factors
A = [A_1 ... A_R] (I x LR), B = [B_1 ... B_R] (J x LR), C = [c_1 ... c_R] (K x R),
and reconstructs X = sum_r (A_r B_r^T) o c_r. With the layout fixed in
core.tensor the matricized forms are

    X_(1) = A (C |p| B)^T
    X_(2) = B (C |p| A)^T
    X_(3) = C [vec(A_1 B_1^T) ... vec(A_R B_R^T)]^T

where |p| is the partitioned Khatri-Rao product.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from core.errors import TensorShapeError
from core.tensor import Tensor3, _check_finite, as_matrix, dematricize, frobenius_norm


def kronecker(a, b) -> np.ndarray:
    return np.kron(as_matrix(a), as_matrix(b))


def khatri_rao(a, b) -> np.ndarray:
    """Column-matching Kronecker product: column k is a_k (x) b_k."""
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise TensorShapeError(
            f"Khatri-Rao needs equal column counts, got {a.shape[1]} and {b.shape[1]}")
    return np.einsum('ik,jk->ijk', a, b).reshape((-1, a.shape[1]))


def _split_blocks(m: np.ndarray, n_blocks: int, name: str) -> int:
    if n_blocks < 1 or m.shape[1] % n_blocks:
        raise TensorShapeError(
            f"{name} has {m.shape[1]} columns, not divisible into {n_blocks} uniform blocks")
    return m.shape[1] // n_blocks


def partitioned_khatri_rao(x, y, n_blocks: int) -> np.ndarray:
    """[X_1 (x) Y_1 ... X_R (x) Y_R] for R uniform column blocks per operand."""
    x, y = as_matrix(x), as_matrix(y)
    p = _split_blocks(x, n_blocks, 'left operand')
    q = _split_blocks(y, n_blocks, 'right operand')
    return np.hstack([
        np.kron(x[:, r * p:(r + 1) * p], y[:, r * q:(r + 1) * q])
        for r in range(n_blocks)
    ])


def mode3_design(a, b, L: int, R: int) -> np.ndarray:
    """IJ x R matrix whose column r is (B_r kr A_r) 1_L = vec(A_r B_r^T)."""
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != L * R or b.shape[1] != L * R:
        raise TensorShapeError(
            f"A and B need L*R={L * R} columns, got {a.shape[1]} and {b.shape[1]}")
    # column l + L*r of A is column l of A_r
    a_blocks = a.reshape(a.shape[0], L, R, order='F')
    b_blocks = b.reshape(b.shape[0], L, R, order='F')
    # E[i, j, r] = sum_l A_r[i, l] B_r[j, l]; F-order flattening of (i, j) is vec(E_r)
    e = np.einsum('ilr,jlr->ijr', a_blocks, b_blocks)
    return e.reshape((a.shape[0] * b.shape[0], R), order='F')


@dataclass(frozen=True, eq=False)
class BlockFactors:
    """Partitioned factor matrices of a BTD-(L,L,1) with R terms."""
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    L: int
    R: int

    def __post_init__(self):
        if self.L < 1 or self.R < 1:
            raise TensorShapeError(f"L and R must be >= 1, got L={self.L}, R={self.R}")
        for name, cols in (('A', self.L * self.R), ('B', self.L * self.R), ('C', self.R)):
            m = np.array(getattr(self, name), dtype=np.float64, copy=True)
            if m.ndim != 2 or m.shape[1] != cols or m.shape[0] < 1:
                raise TensorShapeError(f"{name} must have {cols} columns, got shape {m.shape}")
            _check_finite(m.ravel(order='F'))
            m.flags.writeable = False
            object.__setattr__(self, name, m)

    @property
    def dims(self):
        return self.A.shape[0], self.B.shape[0], self.C.shape[0]

    def block_a(self, r: int) -> np.ndarray:
        return self.A[:, r * self.L:(r + 1) * self.L]

    def block_b(self, r: int) -> np.ndarray:
        return self.B[:, r * self.L:(r + 1) * self.L]

    def column_c(self, r: int) -> np.ndarray:
        return self.C[:, r]

    def block_e(self, r: int) -> np.ndarray:
        """E_r = A_r B_r^T"""
        return self.block_a(r) @ self.block_b(r).T

    def block_ranks(self):
        """Numerical rank of each (A_r, B_r); a proper decomposition has rank L for all."""
        return [(int(np.linalg.matrix_rank(self.block_a(r))),
                 int(np.linalg.matrix_rank(self.block_b(r)))) for r in range(self.R)]

    def as_vector(self) -> np.ndarray:
        """y = [vec(A); vec(B); vec(C)]"""
        return np.concatenate([self.A.ravel(order='F'), self.B.ravel(order='F'),
                               self.C.ravel(order='F')])

    @classmethod
    def from_vector(cls, y, dims: Sequence[int], L: int, R: int) -> 'BlockFactors':
        I, J, K = dims
        y = np.asarray(y, dtype=np.float64)
        n_a, n_b, n_c = I * L * R, J * L * R, K * R
        if y.size != n_a + n_b + n_c:
            raise TensorShapeError(f"vector of length {y.size} does not fit dims {tuple(dims)}")
        return cls(A=y[:n_a].reshape((I, L * R), order='F'),
                   B=y[n_a:n_a + n_b].reshape((J, L * R), order='F'),
                   C=y[n_a + n_b:].reshape((K, R), order='F'), L=L, R=R)

    def replace(self, **changes) -> 'BlockFactors':
        fields = {'A': self.A, 'B': self.B, 'C': self.C, 'L': self.L, 'R': self.R}
        fields.update(changes)
        return BlockFactors(**fields)


def _check_conforms(f: BlockFactors, dims: Sequence[int]):
    if tuple(dims) != f.dims:
        raise TensorShapeError(f"factors give dims {f.dims}, expected {tuple(dims)}")


def reconstruct_btd(f: BlockFactors, dims: Sequence[int] = None) -> Tensor3:
    """X = sum_r (A_r B_r^T) o c_r, built from the mode-1 identity."""
    dims = f.dims if dims is None else tuple(dims)
    _check_conforms(f, dims)
    x1 = f.A @ partitioned_khatri_rao(f.C, f.B, f.R).T
    return dematricize(x1, 1, dims)


def cp_reconstruct(a, b, c) -> Tensor3:
    """sum_r a_r o b_r o c_r (the L = 1 case)."""
    a, b, c = as_matrix(a), as_matrix(b), as_matrix(c)
    return Tensor3(np.einsum('ir,jr,kr->ijk', a, b, c))


def btd_objective(tensor: Tensor3, f: BlockFactors) -> float:
    """||T - reconstruct_btd(f)||_F^2"""
    _check_conforms(f, tensor.dims)
    residual = tensor.data - reconstruct_btd(f, tensor.dims).data
    return frobenius_norm(residual) ** 2
