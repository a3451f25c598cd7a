"""ALS vs RALS from identical starting points on an exact rank-(3,3,1) tensor."""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from config.settings import InitStrategy, RegularizationSchedule, SolverConfig
from core.products import reconstruct_btd
from core.tensor import Tensor3
from models.btd_solver import FitReport, fit, init_factors

logger = logging.getLogger(__name__)

REPORT_VERSION = 1
METHODS = ('als', 'rals')

# lambda values relative to ||T||_F^2: about 10% of a design Gram diagonal at
# 10x15x28, L=3, R=3, fading over the first thousand sweeps
SWAMP_LAMBDA0 = 1e-3
SWAMP_DECAY = 0.99
SWAMP_LAMBDA_MIN = 1e-12


def default_swamp_configs(lambda0: float = SWAMP_LAMBDA0, decay: float = SWAMP_DECAY,
                          lambda_min: float = SWAMP_LAMBDA_MIN, max_sweeps: int = 20000,
                          tol_residual: float = 1e-4,
                          relative: bool = True) -> Tuple[SolverConfig, SolverConfig]:
    als = SolverConfig(max_sweeps=max_sweeps, tol_residual=tol_residual, regularization=None)
    schedule = RegularizationSchedule(lambda0=lambda0, decay=decay,
                                      lambda_min=min(lambda_min, lambda0), relative=relative)
    return als, als.with_changes(regularization=schedule)


@dataclass
class SwampReport:
    seed: int
    dims: Tuple[int, int, int]
    L: int
    R: int
    tol_residual: float
    fits: Dict[str, FitReport] = field(default_factory=dict)

    def reached(self, method: str) -> Optional[int]:
        return self.fits[method].first_sweep_reaching(self.tol_residual)

    def to_dict(self) -> dict:
        return {
            'version': REPORT_VERSION,
            'seed': self.seed,
            'dims': list(self.dims),
            'L': self.L,
            'R': self.R,
            'tol_residual': self.tol_residual,
            'methods': {
                m: {
                    'initial_objective': self.fits[m].objective_trace[0],
                    'final_objective': self.fits[m].final_objective,
                    'final_relative_residual': self.fits[m].final_relative_residual,
                    'sweeps_used': self.fits[m].sweeps_used,
                    'reached_at': self.reached(m),
                    'reached': self.reached(m) is not None,
                    'stop_reason': self.fits[m].stop_reason,
                } for m in METHODS
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + '\n'

    def traces_csv(self) -> str:
        lines = ['method,sweep,objective,relative_residual']
        for m in METHODS:
            report = self.fits[m]
            for sweep, (obj, rel) in enumerate(zip(report.objective_trace,
                                                   report.relative_residual_trace)):
                lines.append(f"{m},{sweep},{obj:.17g},{rel:.17g}")
        return '\n'.join(lines) + '\n'

    def write(self, out_dir: Union[str, Path]) -> List[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = [out_dir / f'swamp_seed{self.seed}.json', out_dir / f'swamp_seed{self.seed}_traces.csv']
        paths[0].write_text(self.to_json(), encoding='utf-8')
        paths[1].write_text(self.traces_csv(), encoding='utf-8')
        return paths


def swamp_instance(seed: int, dims=(10, 15, 28), L: int = 3, R: int = 3):
    """(tensor, shared initialization): truth from `seed`, start from `seed + 1`."""
    truth = init_factors(dims, L, R, InitStrategy.RANDOM_GAUSSIAN, seed)
    start = init_factors(dims, L, R, InitStrategy.RANDOM_GAUSSIAN, seed + 1)
    return Tensor3(reconstruct_btd(truth).data), start


def run_swamp_bench(seed: int, dims=(10, 15, 28), L: int = 3, R: int = 3,
                    cfg_als: SolverConfig = None, cfg_rals: SolverConfig = None) -> SwampReport:
    default_als, default_rals = default_swamp_configs()
    cfg_als = cfg_als or default_als
    cfg_rals = cfg_rals or default_rals
    tensor, start = swamp_instance(seed, dims, L, R)

    report = SwampReport(seed=seed, dims=tuple(dims), L=L, R=R, tol_residual=cfg_rals.tol_residual)
    for method, cfg in zip(METHODS, (cfg_als, cfg_rals)):
        cfg = cfg.with_changes(L=L, R=R, seed=seed, init=InitStrategy.PROVIDED,
                               initial_factors=start)
        report.fits[method] = fit(tensor, cfg)
        logger.info(f"seed {seed} {method.upper()}: reached tolerance at "
                    f"{report.reached(method) if report.reached(method) is not None else 'not reached'}")
    return report


def summarize_swamp(reports: Sequence[SwampReport]) -> dict:
    """Success rate of RALS and how often it needs no more sweeps than ALS."""
    rals_ok = [r for r in reports if r.reached('rals') is not None]
    both = [r for r in rals_ok if r.reached('als') is not None]
    not_slower = [r for r in both if r.reached('rals') <= r.reached('als')]
    return {
        'version': REPORT_VERSION,
        'instances': len(reports),
        'rals_success_rate': len(rals_ok) / len(reports) if reports else 0.0,
        'als_success_rate': (sum(1 for r in reports if r.reached('als') is not None) / len(reports)
                             if reports else 0.0),
        'both_converged': len(both),
        'rals_not_slower_fraction': len(not_slower) / len(both) if both else None,
    }
