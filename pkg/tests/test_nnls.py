"""Least-squares and active-set NNLS kernels."""

import itertools

import numpy as np
import pytest

from core.errors import TensorShapeError
from core.nnls import LsProblem, kkt_residual, kkt_tolerance, solve_ls, solve_nnls


def _brute_force_nnls(design, b):
    """Minimum objective over every support whose restricted LS solution is feasible."""
    n = design.shape[1]
    best = float(b @ b)
    for size in range(1, n + 1):
        for support in itertools.combinations(range(n), size):
            cols = list(support)
            z = np.linalg.lstsq(design[:, cols], b, rcond=None)[0]
            if (z >= 0).all():
                r = b - design[:, cols] @ z
                best = min(best, float(r @ r))
    return best


class TestSolveLs:

    def test_recovers_consistent_system(self, rng):
        design = rng.standard_normal((10, 4))
        x_true = rng.standard_normal((4, 3))
        solution = solve_ls(LsProblem(design, design @ x_true))
        np.testing.assert_allclose(solution.x, x_true, atol=1e-10)
        assert solution.rank == 4
        assert not solution.rank_deficient

    def test_residual_orthogonal_to_columns(self, rng):
        design = rng.standard_normal((12, 5))
        rhs = rng.standard_normal((12, 4))
        x = solve_ls(LsProblem(design, rhs)).x
        for col in range(4):
            residual = rhs[:, col] - design @ x[:, col]
            assert np.abs(design.T @ residual).max() <= 1e-10 * np.linalg.norm(rhs[:, col]) * np.linalg.norm(design)

    def test_columns_solved_independently(self, rng):
        design = rng.standard_normal((8, 3))
        rhs = rng.standard_normal((8, 5))
        together = solve_ls(LsProblem(design, rhs)).x
        for col in range(5):
            alone = solve_ls(LsProblem(design, rhs[:, col])).x
            np.testing.assert_allclose(together[:, [col]], alone, rtol=1e-12, atol=1e-14)

    def test_rank_deficient_gives_minimum_norm(self):
        design = np.array([[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]])
        solution = solve_ls(LsProblem(design, np.array([2.0, 2.0, 2.0])))
        assert solution.rank == 1
        assert solution.rank_deficient
        np.testing.assert_allclose(solution.x[:, 0], [1.0, 1.0], atol=1e-12)

    def test_row_mismatch(self):
        with pytest.raises(TensorShapeError):
            LsProblem(np.ones((3, 2)), np.ones(4))


class TestSolveNnls:

    def test_small_example(self):
        design = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        b = np.array([1.0, -1.0, 0.0])
        x = solve_nnls(LsProblem(design, b)).x[:, 0]
        np.testing.assert_allclose(x, [0.5, 0.0], atol=1e-12)
        r = b - design @ x
        assert float(r @ r) == pytest.approx(_brute_force_nnls(design, b), rel=1e-9)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(1, 5))
            design = rng.standard_normal((6, n))
            b = rng.standard_normal(6)
            problem = LsProblem(design, b)
            x = solve_nnls(problem).x[:, 0]
            assert (x >= 0).all()
            r = b - design @ x
            assert float(r @ r) == pytest.approx(_brute_force_nnls(design, b), rel=1e-9, abs=1e-12)
            assert kkt_residual(problem, x) <= kkt_tolerance(design, b)

    def test_never_worse_than_zero(self, rng):
        design = rng.standard_normal((9, 4))
        rhs = rng.standard_normal((9, 6))
        x = solve_nnls(LsProblem(design, rhs)).x
        for col in range(6):
            r = rhs[:, col] - design @ x[:, col]
            assert r @ r <= rhs[:, col] @ rhs[:, col] + 1e-12

    def test_equals_ls_when_unconstrained_is_positive(self, rng):
        design = rng.random((10, 3)) + 0.1
        x_true = rng.random((3, 2)) + 0.5
        rhs = design @ x_true + 1e-3 * rng.standard_normal((10, 2))
        ls = solve_ls(LsProblem(design, rhs)).x
        assert (ls > 0).all()
        np.testing.assert_allclose(solve_nnls(LsProblem(design, rhs)).x, ls, rtol=1e-9)

    def test_negative_target_gives_zero(self, rng):
        design = rng.random((5, 3))
        x = solve_nnls(LsProblem(design, -design @ np.ones(3))).x
        np.testing.assert_array_equal(x, 0.0)

    def test_zero_rhs(self, rng):
        x = solve_nnls(LsProblem(rng.standard_normal((4, 2)), np.zeros(4))).x
        np.testing.assert_array_equal(x, 0.0)


class TestKktResidual:

    def test_optimum_is_certified(self, rng):
        design = rng.standard_normal((8, 4))
        b = rng.standard_normal(8)
        problem = LsProblem(design, b)
        x = solve_nnls(problem).x
        assert kkt_residual(problem, x) <= kkt_tolerance(design, b)

    def test_grows_with_perturbation(self):
        design = np.eye(3)
        b = np.array([1.0, 2.0, -1.0])
        problem = LsProblem(design, b)
        x = np.array([1.0, 2.0, 0.0])
        assert kkt_residual(problem, x) == pytest.approx(0.0, abs=1e-15)
        small = kkt_residual(problem, x + np.array([1e-3, 0.0, 0.0]))
        large = kkt_residual(problem, x + np.array([1e-1, 0.0, 0.0]))
        assert 0 < small < large

    def test_negative_entries_count(self):
        problem = LsProblem(np.eye(2), np.array([0.0, 0.0]))
        assert kkt_residual(problem, np.array([-0.5, 0.0])) >= 0.5
