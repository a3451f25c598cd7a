"""Configuration for btdkit - solver knobs, pipeline defaults, runtime env"""
import logging
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Optional, Tuple

from dotenv import load_dotenv

from core.errors import ConfigError

if TYPE_CHECKING:
    from core.products import BlockFactors

load_dotenv()

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class InitStrategy(Enum):
    RANDOM_GAUSSIAN = "random-gaussian"
    RANDOM_UNIFORM_NONNEG = "random-uniform-nonneg"
    PROVIDED = "provided"


@dataclass(frozen=True)
class RegularizationSchedule:
    """lambda_n = max(lambda_min, lambda0 * decay**n), one value per sweep"""
    lambda0: float = 1.0
    decay: float = 0.95
    lambda_min: float = 1e-8
    # lambda0 and lambda_min are fractions of ||T||_F^2
    relative: bool = False

    def validate(self):
        if not (self.lambda0 >= self.lambda_min >= 0):
            raise ConfigError(f"need lambda0 >= lambda_min >= 0, got "
                              f"lambda0={self.lambda0}, lambda_min={self.lambda_min}")
        if not (0 < self.decay <= 1):
            raise ConfigError(f"decay must lie in (0, 1], got {self.decay}")


@dataclass(frozen=True)
class SolverConfig:
    L: int = 1
    R: int = 1
    max_sweeps: int = 20000
    tol_rel_objective: float = 1e-10
    tol_residual: float = 1e-4
    # None means plain ALS
    regularization: Optional[RegularizationSchedule] = field(default_factory=RegularizationSchedule)
    nonnegative: bool = False
    seed: int = 0
    init: InitStrategy = InitStrategy.RANDOM_GAUSSIAN
    initial_factors: Optional['BlockFactors'] = None
    stall_window: int = 10

    def validate(self) -> 'SolverConfig':
        if self.L < 1 or self.R < 1:
            raise ConfigError(f"L and R must be >= 1, got L={self.L}, R={self.R}")
        if self.max_sweeps < 0:
            raise ConfigError(f"max_sweeps must be >= 0, got {self.max_sweeps}")
        if self.tol_rel_objective <= 0 or self.tol_residual <= 0:
            raise ConfigError("tolerances must be positive")
        if self.stall_window < 1:
            raise ConfigError(f"stall_window must be >= 1, got {self.stall_window}")
        if self.regularization is not None:
            self.regularization.validate()
        if self.init is InitStrategy.PROVIDED and self.initial_factors is None:
            raise ConfigError("init=provided needs initial_factors")
        return self

    def with_changes(self, **changes) -> 'SolverConfig':
        return replace(self, **changes)

    @property
    def is_regularized(self) -> bool:
        return self.regularization is not None


@dataclass(frozen=True)
class ApportionmentConfig:
    """Receptor-model defaults: 9 sources with rank-9 profiles"""
    n_sources: int = 9
    block_rank: int = 9
    size_labels: Tuple[str, ...] = ('large', 'medium', 'small')
    # DRUM cadence: eight 3-hour samples a day starting at 01:00
    slot_hours: Tuple[int, ...] = (1, 4, 7, 10, 13, 16, 19, 22)
    n_starts: int = 10


@dataclass(frozen=True)
class RuntimeSettings:
    log_level: str = 'INFO'
    n_jobs: int = 1
    out_dir: str = 'outputs'


def get_runtime_settings() -> RuntimeSettings:
    """Read BTDKIT_* variables (a .env file is honoured)"""
    try:
        n_jobs = int(os.environ.get('BTDKIT_N_JOBS', '1'))
    except ValueError as e:
        raise ConfigError(f"BTDKIT_N_JOBS must be an integer: {e}") from e
    return RuntimeSettings(
        log_level=os.environ.get('BTDKIT_LOG_LEVEL', 'INFO').upper(),
        n_jobs=n_jobs,
        out_dir=os.environ.get('BTDKIT_OUT_DIR', 'outputs'),
    )


def configure_logging(level: str = 'INFO'):
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO), format=LOG_FORMAT)
