#!/usr/bin/env python3
"""
btdkit command line
Runs block term decomposition fits, the experiment harness and the source apportionment pipeline.

    btdkit synth | fit | mc | swamp | apportion | surrogate
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

# Add parent directory to path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from automation.monte_carlo import DEFAULT_LEVELS, MC_TOL_RESIDUAL, loglog_slope, run_monte_carlo
from automation.surrogate import generate_surrogate, write_samples_csv
from automation.swamp import (SWAMP_DECAY, SWAMP_LAMBDA0, SWAMP_LAMBDA_MIN, default_swamp_configs,
                             run_swamp_bench, summarize_swamp)
from automation.synthetic import SynthSpec, synth_btd_tensor
from config.settings import (ApportionmentConfig, RegularizationSchedule, SolverConfig,
                             configure_logging, get_runtime_settings)
from core.errors import BtdkitError
from core.products import BlockFactors
from core.tensor import read_tensor, write_tensor
from models.apportionment import (export_report, fit_sources_multistart, load_samples,
                                  save_model, weighted_chi_square)
from models.btd_solver import fit, write_fit_report

logger = logging.getLogger('btdkit')

DEFAULTS = ApportionmentConfig()


def _write_factors(f: BlockFactors, out_dir: Path, prefix: str) -> List[Path]:
    paths = []
    for name in ('A', 'B', 'C'):
        path = out_dir / f"{prefix}_{name}.csv"
        np.savetxt(path, getattr(f, name), delimiter=',', fmt='%.17g')
        paths.append(path)
    return paths


def _solver_config(args, **overrides) -> SolverConfig:
    schedule = None
    if not args.no_regularization:
        schedule = RegularizationSchedule(lambda0=args.lambda0, decay=args.decay,
                                          lambda_min=min(args.lambda_min, args.lambda0),
                                          relative=args.relative_lambda)
    cfg = SolverConfig(max_sweeps=args.max_sweeps, tol_residual=args.tol_residual,
                       tol_rel_objective=args.tol_rel_objective, regularization=schedule,
                       nonnegative=getattr(args, 'nonneg', False), seed=args.seed)
    return cfg.with_changes(**overrides)


def cmd_synth(args) -> int:
    spec = SynthSpec(dims=tuple(args.dims), L=args.L, R=args.R, seed=args.seed,
                     sigma_N=args.sigma, nonneg=args.nonneg)
    observed, truth = synth_btd_tensor(spec)
    write_tensor(observed, args.out / 'tensor.txt')
    _write_factors(truth, args.out, 'truth')
    logger.info(f"✅ Synthetic {spec.dims} tensor written to {args.out}")
    return 0


def cmd_fit(args) -> int:
    tensor = read_tensor(args.tensor)
    report = fit(tensor, _solver_config(args, L=args.L, R=args.R))
    write_fit_report(report, args.out / 'fit_report.txt')
    _write_factors(report.factors, args.out, 'factors')
    logger.info(f"✅ Fit {'converged' if report.converged else 'did not converge'}; "
                f"report in {args.out}")
    return 0


def cmd_mc(args) -> int:
    base = SynthSpec(dims=tuple(args.dims), L=args.L, R=args.R, seed=args.seed, nonneg=args.nonneg)
    report = run_monte_carlo(levels=args.levels, runs=args.runs, base=base,
                             cfg=_solver_config(args), n_starts=args.n_starts, n_jobs=args.n_jobs)
    report.write(args.out)
    try:
        slope = loglog_slope(report.levels, report.medians)
        logger.info(f"log-log slope of median error over [1e-4, 1e-2]: {slope:.3f}")
    except ValueError:
        logger.info("Not enough noise levels in [1e-4, 1e-2] for a slope")
    logger.info(f"✅ Monte Carlo report written to {args.out}")
    return 0


def cmd_swamp(args) -> int:
    cfg_als, cfg_rals = default_swamp_configs(lambda0=args.lambda0, decay=args.decay,
                                              lambda_min=args.lambda_min,
                                              max_sweeps=args.max_sweeps,
                                              tol_residual=args.tol_residual,
                                              relative=args.relative_lambda)
    seeds = args.seeds or [args.seed]
    reports = []
    for seed in seeds:
        report = run_swamp_bench(seed, tuple(args.dims), args.L, args.R, cfg_als, cfg_rals)
        report.write(args.out)
        reports.append(report)
    summary = summarize_swamp(reports)
    summary['config'] = {'lambda0': args.lambda0, 'decay': args.decay,
                         'lambda_min': min(args.lambda_min, args.lambda0),
                         'relative': args.relative_lambda, 'max_sweeps': args.max_sweeps,
                         'tol_residual': args.tol_residual}
    (args.out / 'swamp_summary.json').write_text(
        json.dumps(summary, indent=2, sort_keys=True) + '\n', encoding='utf-8')
    logger.info(f"✅ Swamp benchmark over {len(seeds)} seeds: RALS success rate "
                f"{summary['rals_success_rate']:.0%}")
    return 0


def cmd_apportion(args) -> int:
    data = load_samples(args.samples)
    seeds = [args.seed + s for s in range(args.starts)]
    model = fit_sources_multistart(data, P=args.P, L=args.L, cfg=_solver_config(args),
                                   seeds=seeds, n_jobs=args.n_jobs)
    export_report(model, data, args.out)
    if data.uncertainties is not None:
        logger.info(f"Weighted chi-square Q = {weighted_chi_square(data, model):.6e}")
    if args.save_model:
        save_model(model, args.out / 'source_model.joblib')
    logger.info(f"✅ {args.P}-source apportionment written to {args.out}")
    return 0


def cmd_surrogate(args) -> int:
    air, truth = generate_surrogate(P=args.P, L=args.L, seed=args.seed, snr_db=args.snr_db,
                                    n_days=args.days)
    write_samples_csv(air, args.out / 'samples.csv')
    _write_factors(truth, args.out, 'planted')
    logger.info(f"✅ Surrogate {air.dims} samples written to {args.out}")
    return 0


def _add_solver_args(p: argparse.ArgumentParser, max_sweeps: int = 20000,
                     tol_residual: float = 1e-4,
                     schedule: RegularizationSchedule = RegularizationSchedule()):
    p.add_argument('--max-sweeps', type=int, default=max_sweeps)
    p.add_argument('--tol-residual', type=float, default=tol_residual)
    p.add_argument('--tol-rel-objective', type=float, default=1e-10)
    p.add_argument('--lambda0', type=float, default=schedule.lambda0)
    p.add_argument('--decay', type=float, default=schedule.decay)
    p.add_argument('--lambda-min', type=float, default=schedule.lambda_min)
    p.add_argument('--relative-lambda', action=argparse.BooleanOptionalAction,
                   default=schedule.relative, help='lambda values as fractions of ||T||_F^2')
    p.add_argument('--no-regularization', action='store_true', help='plain ALS')


def build_parser() -> argparse.ArgumentParser:
    settings = get_runtime_settings()
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--out', type=Path, default=Path(settings.out_dir))
    common.add_argument('--log-level', default=settings.log_level)
    common.add_argument('--n-jobs', type=int, default=settings.n_jobs)

    parser = argparse.ArgumentParser(prog='btdkit', description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('synth', parents=[common], help='synthetic BTD tensor with noise')
    p.add_argument('--dims', type=int, nargs=3, default=[5, 6, 7])
    p.add_argument('--L', type=int, default=2)
    p.add_argument('--R', type=int, default=3)
    p.add_argument('--sigma', type=float, default=0.0)
    p.add_argument('--nonneg', action='store_true')
    p.add_argument('--seed', type=int, required=True)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser('fit', parents=[common], help='fit a BTD-(L,L,1) to a tensor file')
    p.add_argument('tensor', type=Path)
    p.add_argument('--L', type=int, required=True)
    p.add_argument('--R', type=int, required=True)
    p.add_argument('--nonneg', action='store_true')
    p.add_argument('--seed', type=int, default=0)
    _add_solver_args(p)
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser('mc', parents=[common], help='noise Monte Carlo')
    p.add_argument('--levels', type=float, nargs='+', default=list(DEFAULT_LEVELS))
    p.add_argument('--runs', type=int, default=50)
    p.add_argument('--n-starts', type=int, default=3)
    p.add_argument('--dims', type=int, nargs=3, default=[5, 6, 7])
    p.add_argument('--L', type=int, default=2)
    p.add_argument('--R', type=int, default=3)
    p.add_argument('--nonneg', action='store_true')
    p.add_argument('--seed', type=int, required=True)
    _add_solver_args(p, max_sweeps=2000, tol_residual=MC_TOL_RESIDUAL)
    p.set_defaults(handler=cmd_mc)

    p = sub.add_parser('swamp', parents=[common], help='ALS vs RALS from shared starts')
    p.add_argument('--dims', type=int, nargs=3, default=[10, 15, 28])
    p.add_argument('--L', type=int, default=3)
    p.add_argument('--R', type=int, default=3)
    p.add_argument('--seed', type=int, required=True)
    p.add_argument('--seeds', type=int, nargs='+', help='several instances; overrides --seed')
    _add_solver_args(p, schedule=RegularizationSchedule(
        lambda0=SWAMP_LAMBDA0, decay=SWAMP_DECAY, lambda_min=SWAMP_LAMBDA_MIN, relative=True))
    p.set_defaults(handler=cmd_swamp)

    p = sub.add_parser('apportion', parents=[common], help='source apportionment of a samples CSV')
    p.add_argument('samples', type=Path)
    p.add_argument('--P', type=int, default=DEFAULTS.n_sources)
    p.add_argument('--L', type=int, default=DEFAULTS.block_rank)
    p.add_argument('--starts', type=int, default=DEFAULTS.n_starts)
    p.add_argument('--seed', type=int, required=True)
    p.add_argument('--save-model', action='store_true')
    _add_solver_args(p)
    p.set_defaults(handler=cmd_apportion)

    p = sub.add_parser('surrogate', parents=[common], help='planted-source 27x3x316 samples CSV')
    p.add_argument('--P', type=int, default=3)
    p.add_argument('--L', type=int, default=2)
    p.add_argument('--snr-db', type=float, default=20.0)
    p.add_argument('--days', type=int, default=41)
    p.add_argument('--seed', type=int, required=True)
    p.set_defaults(handler=cmd_surrogate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        return args.handler(args)
    except BtdkitError as e:
        logger.error(f"❌ btdkit {args.command} failed: {e}")
        return 1
    except Exception as e:
        logger.error(f"❌ Unexpected error in btdkit {args.command}: {e}", exc_info=True)
        return 1


if __name__ == '__main__':
    sys.exit(main())
