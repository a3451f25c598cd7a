"""Least-squares kernels for the factor updates.

Every right-hand-side column is solved independently; results are the same
as solving the columns one at a time.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from core.errors import NnlsIterationError, TensorShapeError
from core.tensor import as_matrix

logger = logging.getLogger(__name__)

KKT_RELATIVE_TOL = 1e-8


@dataclass(frozen=True)
class LsProblem:
    """min ||design @ x_j - rhs_j|| for every column j of rhs"""
    design: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        design = as_matrix(self.design)
        rhs = np.asarray(self.rhs, dtype=np.float64)
        if rhs.ndim == 1:
            rhs = rhs[:, None]
        rhs = as_matrix(rhs)
        if design.shape[0] != rhs.shape[0]:
            raise TensorShapeError(
                f"design has {design.shape[0]} rows but rhs has {rhs.shape[0]}")
        object.__setattr__(self, 'design', design)
        object.__setattr__(self, 'rhs', rhs)

    @property
    def shape(self):
        """(m, n, t)"""
        return self.design.shape[0], self.design.shape[1], self.rhs.shape[1]


@dataclass(frozen=True)
class LsSolution:
    x: np.ndarray
    rank: int
    iterations: int = 0

    @property
    def rank_deficient(self) -> bool:
        return self.rank < self.x.shape[0]


def _lstsq(design: np.ndarray, rhs: np.ndarray):
    # gelsy: complete orthogonal factorization, minimum-norm answer when rank deficient
    x, _, rank, _ = scipy.linalg.lstsq(design, rhs, lapack_driver='gelsy', check_finite=False)
    return x, int(rank)


def solve_ls(problem: LsProblem) -> LsSolution:
    x, rank = _lstsq(problem.design, problem.rhs)
    if rank < problem.design.shape[1]:
        logger.debug(f"Rank-deficient design ({rank} < {problem.design.shape[1]}), "
                     f"returning minimum-norm solution")
    return LsSolution(x=x, rank=rank)


def kkt_tolerance(design: np.ndarray, b: np.ndarray) -> float:
    """eps_kkt = 1e-8 * ||design||_F * ||b||"""
    return KKT_RELATIVE_TOL * np.linalg.norm(design) * np.linalg.norm(b)


def _nnls_column(design: np.ndarray, b: np.ndarray, max_iter: int):
    """Lawson-Hanson active-set NNLS for one right-hand side."""
    m, n = design.shape
    eps = np.finfo(np.float64).eps
    tol = 10 * eps * max(m, n) * np.linalg.norm(design) * np.linalg.norm(b)

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    blocked = np.zeros(n, dtype=bool)
    w = design.T @ b
    iterations = 0

    while True:
        candidates = ~passive & ~blocked
        if not candidates.any() or not (w[candidates] > tol).any():
            break
        j = int(np.argmax(np.where(candidates, w, -np.inf)))
        passive[j] = True
        entering = True

        while True:
            iterations += 1
            if iterations > max_iter:
                raise NnlsIterationError(
                    f"NNLS exceeded {max_iter} active-set iterations", best=x.copy())
            z = np.zeros(n)
            z[passive] = _lstsq(design[:, passive], b)[0]

            if entering and z[j] <= 0:
                # numerically spurious entering variable
                passive[j] = False
                blocked[j] = True
                break
            entering = False
            if (z[passive] > 0).all():
                x = z
                blocked[:] = False
                break

            leaving = passive & (z <= 0)
            step = np.min(x[leaving] / (x[leaving] - z[leaving]))
            x = x + step * (z - x)
            passive &= x > eps * np.max(np.abs(x), initial=1.0)
            x[~passive] = 0.0
            blocked[:] = False

        w = design.T @ (b - design @ x)

    return x, iterations


def solve_nnls(problem: LsProblem) -> LsSolution:
    """Nonnegative LS per column; iteration cap is 3n active-set steps per column."""
    m, n, t = problem.shape
    x = np.zeros((n, t))
    total = 0
    for col in range(t):
        try:
            x[:, col], used = _nnls_column(problem.design, problem.rhs[:, col], 3 * n)
        except NnlsIterationError as e:
            x[:, col] = e.best
            raise NnlsIterationError(f"column {col}: {e}", best=x) from e
        total += used
    rank = int(np.linalg.matrix_rank(problem.design))
    return LsSolution(x=x, rank=rank, iterations=total)


def kkt_residual(problem: LsProblem, x) -> float:
    """Largest KKT violation of x for the NNLS problem, over all columns.

    Zero coordinates may have gradient >= 0, positive coordinates need a zero
    gradient, and negative coordinates count as their magnitude.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape != (problem.design.shape[1], problem.rhs.shape[1]):
        raise TensorShapeError(f"x has shape {x.shape}, problem expects "
                               f"{(problem.design.shape[1], problem.rhs.shape[1])}")
    grad = problem.design.T @ (problem.design @ x - problem.rhs)
    violation = np.where(x > 0, np.abs(grad), np.maximum(-grad, 0.0))
    violation = np.maximum(violation, np.maximum(-x, 0.0))
    return float(violation.max())
