#!/usr/bin/env python3
"""
Source Apportionment Pipeline
Receptor modeling of size-resolved particulate chemistry with a nonnegative BTD-(L,L,1):

    x_ijk = sum_p a_ijp * b_kp + e_ijk,   A_p = C_p D_p^T

species i, size bin j, time sample k. The fit minimizes the unweighted
squared error; measurement uncertainties only feed the weighted chi-square
diagnostic.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import joblib
import numpy as np
import pandas as pd

from config.settings import ApportionmentConfig, InitStrategy, SolverConfig
from core.errors import SampleFileError, TensorShapeError
from core.products import BlockFactors, reconstruct_btd
from core.tensor import Tensor3
from models.btd_solver import FitReport, fit, fit_multistart, write_fit_report

logger = logging.getLogger(__name__)

SAMPLE_COLUMNS = ['species', 'size_bin', 'sample_index', 'datetime', 'concentration']
DATETIME_FORMAT = '%Y-%m-%dT%H:%M:%S'
DEFAULTS = ApportionmentConfig()


@dataclass(frozen=True, eq=False)
class AirTensor:
    """Concentrations x_ijk with labels, optional uncertainties u_ijk and sample times"""
    tensor: Tensor3
    species_labels: Tuple[str, ...]
    size_labels: Tuple[str, ...]
    calendar: pd.DatetimeIndex
    uncertainties: Optional[Tensor3] = None

    def __post_init__(self):
        I, J, K = self.tensor.dims
        if len(self.species_labels) != I or len(self.size_labels) != J:
            raise TensorShapeError(
                f"{len(self.species_labels)} species / {len(self.size_labels)} size labels "
                f"for a {self.tensor.dims} tensor")
        if len(self.calendar) != K:
            raise TensorShapeError(f"calendar has {len(self.calendar)} entries, need {K}")
        if not self.calendar.is_monotonic_increasing:
            raise SampleFileError("calendar must be chronologically non-decreasing")
        if (self.tensor.data < 0).any():
            raise SampleFileError("concentrations must be nonnegative")
        if self.uncertainties is not None:
            if self.uncertainties.dims != self.tensor.dims:
                raise TensorShapeError("uncertainties must match concentration dims")
            if (self.uncertainties.data <= 0).any():
                raise SampleFileError("uncertainties must be strictly positive")

    @property
    def dims(self):
        return self.tensor.dims


@dataclass(eq=False)
class SourceModel:
    """Fitted sources: profiles A_p = C_p D_p^T and contributions b_p (columns of B)"""
    factors: BlockFactors
    fit: FitReport
    calendar: pd.DatetimeIndex
    species_labels: Tuple[str, ...] = ()
    size_labels: Tuple[str, ...] = ()

    @property
    def P(self) -> int:
        return self.factors.R

    @property
    def L(self) -> int:
        return self.factors.L

    @property
    def C_blocks(self) -> List[np.ndarray]:
        return [self.factors.block_a(p) for p in range(self.P)]

    @property
    def D_blocks(self) -> List[np.ndarray]:
        return [self.factors.block_b(p) for p in range(self.P)]

    @property
    def B(self) -> np.ndarray:
        return self.factors.C


def load_samples(path: Union[str, Path],
                 size_labels: Sequence[str] = DEFAULTS.size_labels) -> AirTensor:
    """Read the long-format concentration CSV into a dense species x size x sample tensor."""
    path = Path(path)
    try:
        # species labels such as NA stay strings
        df = pd.read_csv(path, dtype={'species': str, 'size_bin': str}, keep_default_na=False,
                         float_precision='round_trip')
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise SampleFileError(f"{path}: cannot read samples ({e})") from e

    missing_cols = [c for c in SAMPLE_COLUMNS if c not in df.columns]
    if missing_cols:
        raise SampleFileError(f"{path}: missing columns {missing_cols}")
    has_uncertainty = 'uncertainty' in df.columns
    if df.empty:
        raise SampleFileError(f"{path}: no samples")

    unknown = sorted(set(df['size_bin']) - set(size_labels))
    if unknown:
        raise SampleFileError(f"{path}: unknown size bins {unknown}, expected {list(size_labels)}")
    try:
        df['datetime'] = pd.to_datetime(df['datetime'], format='ISO8601')
    except (ValueError, TypeError) as e:
        raise SampleFileError(f"{path}: unparseable datetime ({e})") from e
    numeric = ['concentration', 'uncertainty'] if has_uncertainty else ['concentration']
    for column in numeric:
        df[column] = pd.to_numeric(df[column], errors='coerce')
        if not np.isfinite(df[column].to_numpy(dtype=np.float64)).all():
            raise SampleFileError(f"{path}: {column} values must be finite numbers")
    if (df['concentration'] < 0).any():
        row = int(np.flatnonzero(df['concentration'] < 0)[0])
        raise SampleFileError(f"{path}: negative concentration on data row {row + 1}")
    if has_uncertainty and not (df['uncertainty'] > 0).all():
        row = int(np.flatnonzero(~(df['uncertainty'] > 0))[0])
        raise SampleFileError(f"{path}: non-positive uncertainty on data row {row + 1}")

    key = ['species', 'size_bin', 'sample_index']
    dupes = df[df.duplicated(key, keep=False)]
    if not dupes.empty:
        first = dupes.iloc[0]
        raise SampleFileError(f"{path}: duplicate row for species={first['species']}, "
                              f"size_bin={first['size_bin']}, sample={first['sample_index']}")

    times = df.groupby('sample_index')['datetime'].nunique()
    if (times > 1).any():
        raise SampleFileError(f"{path}: sample {times[times > 1].index[0]} has several datetimes")

    species = tuple(pd.unique(df['species']))
    sizes = tuple(label for label in size_labels if label in set(df['size_bin']))
    samples = (df.drop_duplicates('sample_index')
                 .sort_values(['datetime', 'sample_index'], kind='mergesort'))
    sample_order = samples['sample_index'].to_list()

    full = pd.MultiIndex.from_product([species, sizes, sample_order], names=key)
    indexed = df.set_index(key)
    gaps = full.difference(indexed.index)
    if len(gaps):
        s, b, k = gaps[0]
        raise SampleFileError(f"{path}: {len(gaps)} missing rows, first gap is "
                              f"species={s}, size_bin={b}, sample={k}")
    indexed = indexed.reindex(full)

    dims = (len(species), len(sizes), len(sample_order))
    # C-order reshape of the (species, size, sample) product index
    concentration = indexed['concentration'].to_numpy(dtype=np.float64).reshape(dims)
    uncertainties = None
    if has_uncertainty:
        uncertainties = Tensor3(indexed['uncertainty'].to_numpy(dtype=np.float64).reshape(dims))

    logger.info(f"Loaded {path.name}: {dims[0]} species x {dims[1]} size bins x {dims[2]} samples")
    return AirTensor(tensor=Tensor3(concentration), species_labels=species, size_labels=sizes,
                     calendar=pd.DatetimeIndex(samples['datetime'].to_list()),
                     uncertainties=uncertainties)


def _source_config(d: AirTensor, P: int, L: int, cfg: Optional[SolverConfig]) -> SolverConfig:
    cfg = cfg or SolverConfig()
    init = cfg.init
    if init is InitStrategy.RANDOM_GAUSSIAN:
        init = InitStrategy.RANDOM_UNIFORM_NONNEG
    return cfg.with_changes(L=L, R=P, nonnegative=True, init=init)


def _as_model(d: AirTensor, report: FitReport) -> SourceModel:
    return SourceModel(factors=report.factors, fit=report, calendar=d.calendar,
                       species_labels=d.species_labels, size_labels=d.size_labels)


def fit_sources(d: AirTensor, P: int = DEFAULTS.n_sources, L: int = DEFAULTS.block_rank,
                cfg: Optional[SolverConfig] = None) -> SourceModel:
    """Nonnegative BTD-(L,L,1) with R = P sources."""
    if P < 1 or L < 1:
        raise TensorShapeError(f"P and L must be >= 1, got P={P}, L={L}")
    return _as_model(d, fit(d.tensor, _source_config(d, P, L, cfg)))


def fit_sources_multistart(d: AirTensor, P: int = DEFAULTS.n_sources,
                           L: int = DEFAULTS.block_rank, cfg: Optional[SolverConfig] = None,
                           seeds: Sequence[int] = range(DEFAULTS.n_starts),
                           n_jobs: int = 1) -> SourceModel:
    """Several starts, lowest objective kept (ties by lowest seed)."""
    if P < 1 or L < 1:
        raise TensorShapeError(f"P and L must be >= 1, got P={P}, L={L}")
    report = fit_multistart(d.tensor, _source_config(d, P, L, cfg), list(seeds), n_jobs=n_jobs)
    return _as_model(d, report)


def source_profiles(m: SourceModel) -> List[np.ndarray]:
    """A_p = C_p D_p^T, one I x J matrix per source"""
    return [m.factors.block_e(p) for p in range(m.P)]


def contribution_series(m: SourceModel) -> pd.DataFrame:
    """K x P contributions indexed by sample time; columns are 1-based source numbers."""
    return pd.DataFrame(m.B, index=pd.DatetimeIndex(m.calendar, name='datetime'),
                        columns=pd.Index(range(1, m.P + 1), name='source'))


def reconstruct_from_profiles(m: SourceModel) -> np.ndarray:
    """Elementwise receptor model x_ijk = sum_p a_ijp b_kp."""
    profiles = np.stack(source_profiles(m), axis=-1)
    return np.einsum('ijp,kp->ijk', profiles, m.B)


def weighted_chi_square(d: AirTensor, m: SourceModel) -> float:
    """Q = sum ((x_ijk - sum_p a_ijp b_kp) / u_ijk)^2 (diagnostic only)"""
    if d.uncertainties is None:
        raise SampleFileError("weighted chi-square needs uncertainties")
    fitted = reconstruct_btd(m.factors, d.dims).data
    return float(np.sum(((d.tensor.data - fitted) / d.uncertainties.data) ** 2))


def weekday_weekend_profile(series: pd.DataFrame,
                            slots: Sequence[int] = DEFAULTS.slot_hours) -> pd.DataFrame:
    """Diurnal weekday/weekend summary of contribution series.

    For each source and slot (hour of day), samples are grouped by calendar day;
    the per-day max and min are then averaged over weekdays and over weekends
    (Saturday/Sunday). Slots or day classes without samples produce no rows.
    Columns: source, slot, day_class, stat, value.
    """
    index = pd.DatetimeIndex(series.index)
    frame = series.copy()
    frame.index = index
    frame['_hour'] = index.hour
    frame['_day'] = index.normalize()
    frame['_day_class'] = np.where(index.dayofweek >= 5, 'weekend', 'weekday')

    rows = []
    for source in series.columns:
        for slot in slots:
            in_slot = frame[frame['_hour'] == slot]
            if in_slot.empty:
                continue
            daily = in_slot.groupby(['_day_class', '_day'])[source].agg(['max', 'min'])
            means = daily.groupby(level='_day_class').mean()
            for day_class in ('weekday', 'weekend'):
                if day_class not in means.index:
                    continue
                rows.append((source, slot, day_class, 'mean_daily_max', float(means.loc[day_class, 'max'])))
                rows.append((source, slot, day_class, 'mean_daily_min', float(means.loc[day_class, 'min'])))
    return pd.DataFrame(rows, columns=['source', 'slot', 'day_class', 'stat', 'value'])


def _write_csv(df: pd.DataFrame, path: Path):
    df.to_csv(path, index=False, float_format='%.17g', lineterminator='\n', encoding='utf-8')


def export_report(m: SourceModel, d: AirTensor, out_dir: Union[str, Path],
                  slots: Sequence[int] = DEFAULTS.slot_hours) -> List[Path]:
    """Write profiles.csv, contributions.csv, weekday_weekend.csv and fit_report.txt."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    I, J, _ = d.dims

    profiles = source_profiles(m)
    profile_rows = [(d.species_labels[i], d.size_labels[j], p + 1, profiles[p][i, j])
                    for p in range(m.P) for i in range(I) for j in range(J)]
    profiles_df = pd.DataFrame(profile_rows, columns=['species', 'size_bin', 'source', 'value'])

    series = contribution_series(m)
    stamps = series.index.strftime(DATETIME_FORMAT)
    contributions_df = pd.DataFrame({
        'datetime': np.repeat(np.asarray(stamps), m.P),
        'source': np.tile(np.arange(1, m.P + 1), len(series)),
        'value': series.to_numpy().ravel(),
    })

    paths = [out_dir / 'profiles.csv', out_dir / 'contributions.csv',
             out_dir / 'weekday_weekend.csv', out_dir / 'fit_report.txt']
    _write_csv(profiles_df, paths[0])
    _write_csv(contributions_df, paths[1])
    _write_csv(weekday_weekend_profile(series, slots), paths[2])
    write_fit_report(m.fit, paths[3])
    logger.info(f"Exported {m.P}-source report to {out_dir}")
    return paths


def save_model(m: SourceModel, filepath: Union[str, Path] = 'source_model.joblib'):
    """Save fitted source model to disk"""
    joblib.dump(m, filepath)
    logger.info(f"Model saved to {filepath}")


def load_model(filepath: Union[str, Path] = 'source_model.joblib') -> SourceModel:
    """Load fitted source model from disk"""
    model = joblib.load(filepath)
    if not isinstance(model, SourceModel):
        raise TypeError(f"{filepath} does not hold a SourceModel")
    return model
