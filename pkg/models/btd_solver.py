"""BTD-(L,L,1) fitting by alternating least squares (ALS) and its
proximal-regularized variant (RALS).

Each sweep updates A, then B, then C. Every block update solves a linear
least-squares problem against a matricized view of the data; RALS adds
lambda_n * ||Z - Z_prev||_F^2 to each of them, using one lambda_n for the
whole sweep. The proximal term enters as sqrt(lambda_n)-scaled stacked rows
[design; sqrt(lambda_n) I] against [X_(n)^T; sqrt(lambda_n) Z_prev^T].
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from config.settings import InitStrategy, SolverConfig
from core.errors import (AlignmentError, BtdkitError, DivergenceError, NonFiniteValueError,
                         TensorShapeError)
from core.nnls import LsProblem, solve_ls, solve_nnls
from core.products import BlockFactors, btd_objective, mode3_design, partitioned_khatri_rao
from core.tensor import Tensor3, as_matrix, frobenius_norm, matricize

logger = logging.getLogger(__name__)


@dataclass
class FitReport:
    """Outcome of one fit. Traces are indexed by sweep; entry 0 is the initialization."""
    factors: BlockFactors
    objective_trace: List[float] = field(default_factory=list)
    relative_residual_trace: List[float] = field(default_factory=list)
    lambda_trace: List[float] = field(default_factory=list)
    sweeps_used: int = 0
    converged: bool = False
    gradient_norm: float = float('nan')
    stop_reason: str = 'max_sweeps'
    seed: Optional[int] = None

    @property
    def final_objective(self) -> float:
        return self.objective_trace[-1]

    @property
    def final_relative_residual(self) -> float:
        return self.relative_residual_trace[-1]

    def first_sweep_reaching(self, tol: float) -> Optional[int]:
        for sweep, value in enumerate(self.relative_residual_trace):
            if value <= tol:
                return sweep
        return None

    def to_text(self) -> str:
        header = {
            'L': self.factors.L,
            'R': self.factors.R,
            'dims': 'x'.join(str(d) for d in self.factors.dims),
            'sweeps_used': self.sweeps_used,
            'converged': str(self.converged).lower(),
            'stop_reason': self.stop_reason,
            'seed': '' if self.seed is None else self.seed,
            'final_objective': f"{self.final_objective:.17g}",
            'final_relative_residual': f"{self.final_relative_residual:.17g}",
            'gradient_norm': f"{self.gradient_norm:.17g}",
        }
        lines = ['# btdkit fit report']
        lines += [f"{key} = {value}" for key, value in header.items()]
        lines.append('sweep,lambda,objective,relative_residual')
        for sweep, (obj, rel) in enumerate(zip(self.objective_trace, self.relative_residual_trace)):
            lam = self.lambda_trace[sweep - 1] if sweep > 0 else float('nan')
            lines.append(f"{sweep},{lam:.17g},{obj:.17g},{rel:.17g}")
        return '\n'.join(lines) + '\n'


def write_fit_report(report: FitReport, path: Union[str, Path]):
    Path(path).write_text(report.to_text(), encoding='utf-8')


def lambda_schedule(n: int, cfg: SolverConfig) -> float:
    """lambda_n = max(lambda_min, lambda0 * decay**n); 0 for plain ALS"""
    if n < 0:
        raise ValueError(f"sweep index must be >= 0, got {n}")
    schedule = cfg.regularization
    if schedule is None:
        return 0.0
    return max(schedule.lambda_min, schedule.lambda0 * schedule.decay ** n)


def init_factors(dims: Sequence[int], L: int, R: int,
                 strategy: InitStrategy = InitStrategy.RANDOM_GAUSSIAN,
                 seed: int = 0, provided: Optional[BlockFactors] = None) -> BlockFactors:
    """Starting factors; A, B, C are drawn in that order from PCG64(seed)."""
    I, J, K = dims
    if L * R > min(I * K, J * K):
        logger.warning(f"L*R={L * R} exceeds min(I*K, J*K)={min(I * K, J * K)}; "
                       f"inner solves will be rank deficient")
    if strategy is InitStrategy.PROVIDED:
        if provided is None:
            raise TensorShapeError("provided initialization needs factors")
        if provided.dims != tuple(dims) or provided.L != L or provided.R != R:
            raise TensorShapeError(
                f"provided factors are dims={provided.dims}, L={provided.L}, R={provided.R}; "
                f"expected dims={tuple(dims)}, L={L}, R={R}")
        return provided.replace()

    rng = np.random.default_rng(seed)
    if strategy is InitStrategy.RANDOM_UNIFORM_NONNEG:
        draw = rng.random
    else:
        draw = rng.standard_normal
    return BlockFactors(A=draw((I, L * R)), B=draw((J, L * R)), C=draw((K, R)), L=L, R=R)


@dataclass(frozen=True)
class _Unfoldings:
    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray

    @classmethod
    def of(cls, tensor: Tensor3) -> '_Unfoldings':
        return cls(matricize(tensor, 1), matricize(tensor, 2), matricize(tensor, 3))


def _update_block(design: np.ndarray, target: np.ndarray, previous: np.ndarray,
                  lam: float, nonneg: bool) -> np.ndarray:
    """argmin_Z ||target - Z design^T||^2 + lam ||Z - previous||^2, solved transposed"""
    if lam > 0:
        root = math.sqrt(lam)
        design = np.vstack([design, root * np.eye(design.shape[1])])
        rhs = np.vstack([target.T, root * previous.T])
    else:
        rhs = target.T
    problem = LsProblem(design, rhs)
    solution = solve_nnls(problem) if nonneg else solve_ls(problem)
    return solution.x.T


def _sweep(unf: _Unfoldings, f: BlockFactors, lam: float, nonneg: bool) -> Tuple[BlockFactors, float]:
    L, R = f.L, f.R
    a = _update_block(partitioned_khatri_rao(f.C, f.B, R), unf.x1, f.A, lam, nonneg)
    b = _update_block(partitioned_khatri_rao(f.C, a, R), unf.x2, f.B, lam, nonneg)
    m3 = mode3_design(a, b, L, R)
    c = _update_block(m3, unf.x3, f.C, lam, nonneg)
    objective = float(np.linalg.norm(unf.x3 - c @ m3.T) ** 2)
    return BlockFactors(A=a, B=b, C=c, L=L, R=R), objective


def als_sweep(tensor: Tensor3, f: BlockFactors, nonneg: bool = False) -> BlockFactors:
    return _sweep(_Unfoldings.of(tensor), f, 0.0, nonneg)[0]


def rals_sweep(tensor: Tensor3, f: BlockFactors, lam: float, nonneg: bool = False) -> BlockFactors:
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    return _sweep(_Unfoldings.of(tensor), f, lam, nonneg)[0]


def _relative(objective: float, tensor_norm: float) -> float:
    root = math.sqrt(objective) if objective > 0 else 0.0
    return root / tensor_norm if tensor_norm > 0 else root


def _zero_fit(report: FitReport, method: str) -> FitReport:
    """The all-zero tensor is fitted exactly by all-zero factors."""
    f = report.factors
    zero = BlockFactors(A=np.zeros_like(f.A), B=np.zeros_like(f.B), C=np.zeros_like(f.C),
                        L=f.L, R=f.R)
    report.factors = zero
    report.objective_trace.append(0.0)
    report.relative_residual_trace.append(0.0)
    report.lambda_trace.append(0.0)
    report.sweeps_used = 1
    report.converged = True
    report.stop_reason = 'residual'
    report.gradient_norm = 0.0
    logger.info(f"{method} skipped: the tensor is all zero")
    return report


def fit(tensor: Tensor3, cfg: SolverConfig) -> FitReport:
    """Run ALS/RALS sweeps until the residual target, an objective stall, or max_sweeps."""
    cfg.validate()
    f = init_factors(tensor.dims, cfg.L, cfg.R, cfg.init, cfg.seed, cfg.initial_factors)
    unf = _Unfoldings.of(tensor)
    norm = frobenius_norm(tensor)

    objective = btd_objective(tensor, f)
    report = FitReport(factors=f, objective_trace=[objective],
                       relative_residual_trace=[_relative(objective, norm)], seed=cfg.seed)
    method = 'RALS' if cfg.is_regularized else 'ALS'
    logger.info(f"Fitting BTD-({cfg.L},{cfg.L},1) R={cfg.R} on {tensor.dims} with {method}"
                f"{' (nonnegative)' if cfg.nonnegative else ''}, seed={cfg.seed}")

    if norm == 0 and cfg.max_sweeps > 0:
        return _zero_fit(report, method)

    scale = norm ** 2 if cfg.is_regularized and cfg.regularization.relative else 1.0
    stalled = 0
    for n in range(cfg.max_sweeps):
        if report.relative_residual_trace[-1] <= cfg.tol_residual:
            break
        lam = lambda_schedule(n, cfg) * scale
        try:
            f, new_objective = _sweep(unf, f, lam, cfg.nonnegative)
        except NonFiniteValueError as e:
            report.stop_reason = 'diverged'
            raise DivergenceError(f"non-finite factors at sweep {n + 1}: {e}", report) from e
        if not math.isfinite(new_objective):
            report.stop_reason = 'diverged'
            raise DivergenceError(f"objective became {new_objective} at sweep {n + 1}", report)

        previous = report.objective_trace[-1]
        report.factors = f
        report.objective_trace.append(new_objective)
        report.relative_residual_trace.append(_relative(new_objective, norm))
        report.lambda_trace.append(lam)
        report.sweeps_used = n + 1
        if (n + 1) % 1000 == 0:
            logger.debug(f"sweep {n + 1}: objective={new_objective:.6e} lambda={lam:.3e}")

        change = abs(previous - new_objective) / max(previous, np.finfo(np.float64).tiny)
        stalled = stalled + 1 if change <= cfg.tol_rel_objective else 0
        if stalled >= cfg.stall_window:
            report.stop_reason = 'stalled'
            break

    report.converged = report.relative_residual_trace[-1] <= cfg.tol_residual
    if report.converged:
        report.stop_reason = 'residual'
    report.gradient_norm = float(np.linalg.norm(objective_gradient(tensor, report.factors)))
    logger.info(f"{method} finished after {report.sweeps_used} sweeps ({report.stop_reason}): "
                f"relative residual {report.final_relative_residual:.3e}")
    return report


def _fit_seed(tensor: Tensor3, cfg: SolverConfig, seed: int):
    try:
        return seed, fit(tensor, cfg.with_changes(seed=seed)), None
    except BtdkitError as e:
        return seed, None, e


def fit_multistart(tensor: Tensor3, cfg: SolverConfig, seeds: Sequence[int],
                   n_jobs: int = 1) -> FitReport:
    """Independent fits per seed; lowest final objective wins, ties go to the lowest seed."""
    if not seeds:
        raise ValueError("need at least one seed")
    outcomes = Parallel(n_jobs=n_jobs)(delayed(_fit_seed)(tensor, cfg, s) for s in seeds)
    outcomes.sort(key=lambda item: item[0])
    reports = [(seed, report) for seed, report, _ in outcomes if report is not None]
    failures = [(seed, error) for seed, _, error in outcomes if error is not None]
    for seed, error in failures:
        logger.warning(f"Start with seed {seed} failed: {error}")
    if not reports:
        raise failures[0][1]
    best_seed, best = min(reports, key=lambda item: (item[1].final_objective, item[0]))
    logger.info(f"Best of {len(seeds)} starts: seed {best_seed}, "
                f"objective {best.final_objective:.6e}")
    return best


def objective_gradient(tensor: Tensor3, f: BlockFactors) -> np.ndarray:
    """Gradient of ||T - X(A,B,C)||^2 as [vec(dA); vec(dB); vec(dC)]."""
    if f.dims != tensor.dims:
        raise TensorShapeError(f"factors give dims {f.dims}, tensor is {tensor.dims}")
    unf = _Unfoldings.of(tensor)
    m1 = partitioned_khatri_rao(f.C, f.B, f.R)
    m2 = partitioned_khatri_rao(f.C, f.A, f.R)
    m3 = mode3_design(f.A, f.B, f.L, f.R)
    grad_a = -2.0 * (unf.x1 - f.A @ m1.T) @ m1
    grad_b = -2.0 * (unf.x2 - f.B @ m2.T) @ m2
    grad_c = -2.0 * (unf.x3 - f.C @ m3.T) @ m3
    return np.concatenate([grad_a.ravel(order='F'), grad_b.ravel(order='F'),
                           grad_c.ravel(order='F')])


@dataclass(frozen=True)
class Alignment:
    """estimate[:, permutation[r]] * scales[r] is matched to reference column r"""
    permutation: Tuple[int, ...]
    scales: np.ndarray
    error: float
    aligned: np.ndarray


EXHAUSTIVE_ALIGNMENT_MAX_R = 8


def align_factors(reference, estimate) -> Alignment:
    """Best column permutation and per-column scaling of `estimate` onto `reference`.

    Exhaustive search for R <= 8, greedy matching on absolute cosine otherwise.
    `error` is ||reference - aligned||_F / ||reference||_F.
    """
    ref, est = as_matrix(reference), as_matrix(estimate)
    if ref.shape != est.shape:
        raise AlignmentError(f"shapes differ: {ref.shape} vs {est.shape}")
    ref_norms = np.linalg.norm(ref, axis=0)
    if (ref_norms == 0).any():
        raise AlignmentError(f"reference column {int(np.argmin(ref_norms))} is zero")
    est_norms = np.linalg.norm(est, axis=0)
    R = ref.shape[1]

    inner = ref.T @ est
    safe = np.where(est_norms > 0, est_norms, 1.0)
    # residual of the best scalar fit of est_s onto ref_r
    cost = ref_norms[:, None] ** 2 - np.where(est_norms > 0, inner ** 2 / safe ** 2, 0.0)

    if R <= EXHAUSTIVE_ALIGNMENT_MAX_R:
        perms = np.array(list(itertools.permutations(range(R))), dtype=int)
        totals = cost[np.arange(R), perms].sum(axis=1)
        permutation = tuple(int(s) for s in perms[int(np.argmin(totals))])
    else:
        score = np.abs(inner) / (ref_norms[:, None] * safe[None, :])
        score[:, est_norms == 0] = 0.0
        chosen = [-1] * R
        free_ref, free_est = np.ones(R, dtype=bool), np.ones(R, dtype=bool)
        for _ in range(R):
            masked = np.where(free_ref[:, None] & free_est[None, :], score, -np.inf)
            r, s = np.unravel_index(int(np.argmax(masked)), masked.shape)
            chosen[r] = int(s)
            free_ref[r], free_est[s] = False, False
        permutation = tuple(chosen)

    idx = list(permutation)
    scales = np.where(est_norms[idx] > 0, inner[np.arange(R), idx] / safe[idx] ** 2, 0.0)
    aligned = est[:, idx] * scales
    error = float(np.linalg.norm(ref - aligned) / np.linalg.norm(ref))
    return Alignment(permutation=permutation, scales=scales, error=error, aligned=aligned)
