#!/usr/bin/env python3
"""
Noise Monte Carlo
Median aligned error of the recovered C factor versus noise level
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
from joblib import Parallel, delayed

from automation.synthetic import SynthSpec, synth_btd_tensor
from config.settings import SolverConfig
from core.errors import BtdkitError
from models.btd_solver import align_factors, fit_multistart

logger = logging.getLogger(__name__)

REPORT_VERSION = 1
DEFAULT_LEVELS = (0.0, 1e-4, 1e-3, 1e-2, 1e-1)
# well below the smallest positive noise level
MC_TOL_RESIDUAL = 1e-10


@dataclass
class McReport:
    levels: List[float]
    runs: int
    n_starts: int
    tol_residual: float = MC_TOL_RESIDUAL
    errors: List[List[float]] = field(default_factory=list)  # per level, by run; nan = failed

    @property
    def medians(self) -> List[float]:
        out = []
        for errs in self.errors:
            ok = [e for e in errs if not math.isnan(e)]
            out.append(float(np.median(ok)) if ok else float('nan'))
        return out

    @property
    def failures(self) -> List[int]:
        return [sum(1 for e in errs if math.isnan(e)) for errs in self.errors]

    def to_dict(self) -> dict:
        def clean(x):
            return None if math.isnan(x) else x
        return {
            'version': REPORT_VERSION,
            'levels': list(self.levels),
            'runs': self.runs,
            'n_starts': self.n_starts,
            'tol_residual': self.tol_residual,
            'medians': [clean(m) for m in self.medians],
            'failures': self.failures,
            'errors': [[clean(e) for e in errs] for errs in self.errors],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + '\n'

    def to_csv(self) -> str:
        lines = ['level,run,error']
        for level, errs in zip(self.levels, self.errors):
            for run, e in enumerate(errs):
                lines.append(f"{level:.17g},{run},{e:.17g}")
        return '\n'.join(lines) + '\n'

    def write(self, out_dir: Union[str, Path]) -> List[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = [out_dir / 'mc_report.json', out_dir / 'mc_errors.csv']
        paths[0].write_text(self.to_json(), encoding='utf-8')
        paths[1].write_text(self.to_csv(), encoding='utf-8')
        return paths


def start_seeds(base_seed: int, run: int, n_starts: int) -> List[int]:
    """Initialization seeds for one run, disjoint from the ground-truth seeds"""
    return [base_seed + 100_000 + run * n_starts + s for s in range(n_starts)]


def _one_run(level: float, run: int, base: SynthSpec, cfg: SolverConfig, n_starts: int):
    spec = replace(base, seed=base.seed + run, sigma_N=level)
    try:
        observed, truth = synth_btd_tensor(spec)
        report = fit_multistart(observed, cfg, start_seeds(base.seed, run, n_starts))
        return level, run, align_factors(truth.C, report.factors.C).error
    except BtdkitError as e:
        logger.warning(f"Run {run} at sigma_N={level:g} failed: {e}")
        return level, run, float('nan')


def run_monte_carlo(levels: Sequence[float] = DEFAULT_LEVELS, runs: int = 50,
                    base: SynthSpec = SynthSpec(), cfg: SolverConfig = None,
                    n_starts: int = 3, n_jobs: int = 1) -> McReport:
    """Each run shares one ground truth across noise levels (truth seed = base.seed + run)."""
    if runs < 1 or not levels:
        raise ValueError("need runs >= 1 and at least one noise level")
    base.validate()
    cfg = (cfg or SolverConfig(tol_residual=MC_TOL_RESIDUAL)).with_changes(
        L=base.L, R=base.R, nonnegative=base.nonneg)
    logger.info(f"Monte Carlo: {len(levels)} levels x {runs} runs x {n_starts} starts "
                f"on {base.dims}, L={base.L}, R={base.R}")

    jobs = [(level, run) for level in levels for run in range(runs)]
    results = Parallel(n_jobs=n_jobs)(
        delayed(_one_run)(level, run, base, cfg, n_starts) for level, run in jobs)
    results.sort(key=lambda item: (list(levels).index(item[0]), item[1]))

    report = McReport(levels=[float(x) for x in levels], runs=runs, n_starts=n_starts,
                      tol_residual=cfg.tol_residual)
    for level in levels:
        report.errors.append([e for lv, _, e in results if lv == level])
    for level, median, failed in zip(report.levels, report.medians, report.failures):
        logger.info(f"  sigma_N={level:g}: median e={median:.3e} ({failed} failed)")
    return report


def loglog_slope(levels: Sequence[float], medians: Sequence[float],
                 lo: float = 1e-4, hi: float = 1e-2) -> float:
    """Least-squares slope of log10(median e) against log10(sigma_N) within [lo, hi]."""
    pairs = [(lv, m) for lv, m in zip(levels, medians)
             if lo <= lv <= hi and lv > 0 and m > 0 and not math.isnan(m)]
    if len(pairs) < 2:
        raise ValueError("need two positive levels with finite medians to fit a slope")
    x = np.log10([p[0] for p in pairs])
    y = np.log10([p[1] for p in pairs])
    return float(np.polyfit(x, y, 1)[0])
