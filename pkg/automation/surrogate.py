#!/usr/bin/env python3
"""
Surrogate Air-Sample Generator
Planted-source stand-in for the size-resolved DRUM impactor dataset:
27 species x 3 size bins x 316 samples, nonnegative, with uncertainties.

DRUM cadence: 3 samples on the first day, 8 on every full day, 1 on the last.
"""

import logging
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config.settings import ApportionmentConfig
from core.errors import ConfigError, SampleFileError
from core.products import BlockFactors, reconstruct_btd
from core.tensor import Tensor3
from models.apportionment import DATETIME_FORMAT, AirTensor

logger = logging.getLogger(__name__)

DEFAULTS = ApportionmentConfig()
SPECIES = ('Na', 'Mg', 'Al', 'Si', 'P', 'S', 'Cl', 'K', 'Ca', 'Ti', 'V', 'Cr', 'Mn', 'Fe',
           'Co', 'Ni', 'Cu', 'Zn', 'Ga', 'As', 'Se', 'Br', 'Rb', 'Sr', 'Zr', 'Mo', 'Pb')
FIRST_DAY_SAMPLES = 3
LAST_DAY_SAMPLES = 1


def drum_calendar(start: str = '2002-02-25', n_days: int = 41,
                  slot_hours: Sequence[int] = DEFAULTS.slot_hours) -> pd.DatetimeIndex:
    """Sample times: last 3 slots of day one, all slots in between, first slot of the last day.

    41 days give 3 + 39*8 + 1 = 316 samples.
    """
    if n_days < 2:
        raise ConfigError(f"a DRUM calendar spans at least 2 days, got {n_days}")
    first = pd.Timestamp(start).normalize()
    stamps = []
    for day in range(n_days):
        if day == 0:
            hours = slot_hours[-FIRST_DAY_SAMPLES:]
        elif day == n_days - 1:
            hours = slot_hours[:LAST_DAY_SAMPLES]
        else:
            hours = slot_hours
        stamps.extend(first + pd.Timedelta(days=day, hours=h) for h in hours)
    return pd.DatetimeIndex(stamps)


def validate_drum_calendar(calendar: pd.DatetimeIndex,
                           slot_hours: Sequence[int] = DEFAULTS.slot_hours) -> bool:
    """Raise SampleFileError unless the calendar follows the DRUM cadence"""
    calendar = pd.DatetimeIndex(calendar)
    if not calendar.is_monotonic_increasing or calendar.has_duplicates:
        raise SampleFileError("DRUM calendar must be strictly increasing")
    if not set(calendar.hour).issubset(slot_hours):
        raise SampleFileError(f"sample hours {sorted(set(calendar.hour))} outside slots {list(slot_hours)}")
    counts = pd.Series(1, index=calendar.normalize()).groupby(level=0).size()
    expected_days = pd.date_range(counts.index[0], counts.index[-1], freq='D')
    if len(counts) != len(expected_days) or len(counts) < 2:
        raise SampleFileError("DRUM calendar must cover consecutive days")
    middle = counts.iloc[1:-1]
    if (counts.iloc[0] != FIRST_DAY_SAMPLES or counts.iloc[-1] != LAST_DAY_SAMPLES
            or (middle != len(slot_hours)).any()):
        raise SampleFileError(f"per-day sample counts {counts.tolist()} break the "
                              f"{FIRST_DAY_SAMPLES}/{len(slot_hours)}/{LAST_DAY_SAMPLES} cadence")
    return True


def _planted_contributions(rng: np.random.Generator, calendar: pd.DatetimeIndex, P: int) -> np.ndarray:
    """Log-normal day-to-day levels times a diurnal cycle and a weekday/weekend ratio."""
    hours = calendar.hour.to_numpy()
    weekend = calendar.dayofweek.to_numpy() >= 5
    days = (calendar.normalize() - calendar[0].normalize()).days.to_numpy()
    series = np.empty((len(calendar), P))
    for p in range(P):
        daily_level = rng.lognormal(mean=0.0, sigma=0.6, size=days.max() + 1)
        peak = rng.uniform(0, 24)
        diurnal = 1.0 + 0.6 * np.cos(2 * np.pi * (hours - peak) / 24.0)
        weekend_ratio = rng.uniform(0.4, 1.2)
        jitter = rng.lognormal(mean=0.0, sigma=0.3, size=len(calendar))
        series[:, p] = daily_level[days] * diurnal * np.where(weekend, weekend_ratio, 1.0) * jitter
    return series


def generate_surrogate(P: int = 3, L: int = 2, seed: int = 0, snr_db: float = 20.0,
                       n_days: int = 41, species: Sequence[str] = SPECIES,
                       size_labels: Sequence[str] = DEFAULTS.size_labels,
                       uncertainty_fraction: float = 0.1) -> Tuple[AirTensor, BlockFactors]:
    """Nonnegative data from P planted rank-L profiles.

    Noise is multiplicative Gaussian with relative level 10**(-snr_db/20), so
    ||noise|| / ||clean|| is about that level; values are clipped at zero.
    Returns the data and the clean ground-truth factors.
    """
    if P < 1 or L < 1:
        raise ConfigError(f"P and L must be >= 1, got P={P}, L={L}")
    rng = np.random.default_rng(seed)
    calendar = drum_calendar(n_days=n_days)
    validate_drum_calendar(calendar)
    I, J, K = len(species), len(size_labels), len(calendar)

    # skewed species loadings keep the planted profiles distinguishable
    c_blocks = rng.random((I, L * P)) ** 3
    d_blocks = rng.random((J, L * P))
    contributions = _planted_contributions(rng, calendar, P)
    truth = BlockFactors(A=c_blocks, B=d_blocks, C=contributions, L=L, R=P)

    clean = reconstruct_btd(truth).data
    level = 10.0 ** (-snr_db / 20.0)
    noisy = np.clip(clean * (1.0 + level * rng.standard_normal(clean.shape)), 0.0, None)
    floor = 0.01 * clean.mean()
    uncertainties = uncertainty_fraction * clean + floor

    air = AirTensor(tensor=Tensor3(noisy), species_labels=tuple(species),
                    size_labels=tuple(size_labels), calendar=calendar,
                    uncertainties=Tensor3(uncertainties))
    logger.info(f"Surrogate: {P} planted sources (L={L}) on {air.dims}, SNR {snr_db:g} dB")
    return air, truth


def samples_frame(air: AirTensor) -> pd.DataFrame:
    """Long format accepted by models.apportionment.load_samples (1-based sample_index)."""
    I, J, K = air.dims
    index = pd.MultiIndex.from_product([range(I), range(J), range(K)], names=['i', 'j', 'k'])
    i, j, k = (index.get_level_values(n).to_numpy() for n in ('i', 'j', 'k'))
    frame = pd.DataFrame({
        'species': np.asarray(air.species_labels, dtype=object)[i],
        'size_bin': np.asarray(air.size_labels, dtype=object)[j],
        'sample_index': k + 1,
        'datetime': np.asarray(air.calendar.strftime(DATETIME_FORMAT), dtype=object)[k],
        'concentration': air.tensor.data[i, j, k],
    })
    if air.uncertainties is not None:
        frame['uncertainty'] = air.uncertainties.data[i, j, k]
    return frame


def write_samples_csv(air: AirTensor, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    samples_frame(air).to_csv(path, index=False, float_format='%.17g', lineterminator='\n',
                              encoding='utf-8')
    logger.info(f"Wrote {path}")
    return path
