"""Synthetic BTD-(L,L,1) tensors with normalized Gaussian noise:

    observed = T / ||T||_F + sigma_N * N / ||N||_F
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from core.errors import BtdkitError, ConfigError
from core.products import BlockFactors, reconstruct_btd
from core.tensor import Tensor3, frobenius_norm

logger = logging.getLogger(__name__)

MAX_REDRAWS = 5


@dataclass(frozen=True)
class SynthSpec:
    dims: Tuple[int, int, int] = (5, 6, 7)
    L: int = 2
    R: int = 3
    seed: int = 0
    sigma_N: float = 0.0
    nonneg: bool = False

    def validate(self) -> 'SynthSpec':
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ConfigError(f"dims must be three positive integers, got {self.dims}")
        if self.L < 1 or self.R < 1:
            raise ConfigError(f"L and R must be >= 1, got L={self.L}, R={self.R}")
        if not self.sigma_N >= 0:
            raise ConfigError(f"sigma_N must be >= 0, got {self.sigma_N}")
        return self


def synth_btd_tensor(spec: SynthSpec) -> Tuple[Tensor3, BlockFactors]:
    """Draw ground-truth factors (A, B, C, then N) from PCG64(seed) and build the observation."""
    spec.validate()
    I, J, K = spec.dims
    LR = spec.L * spec.R
    for attempt in range(MAX_REDRAWS):
        rng = np.random.default_rng(spec.seed + attempt)
        draw = rng.random if spec.nonneg else rng.standard_normal
        truth = BlockFactors(A=draw((I, LR)), B=draw((J, LR)), C=draw((K, spec.R)),
                             L=spec.L, R=spec.R)
        clean = reconstruct_btd(truth).data
        clean_norm = frobenius_norm(clean)
        if clean_norm > 0:
            break
        logger.warning(f"Zero-norm ground truth for seed {spec.seed + attempt}, redrawing")
    else:
        raise BtdkitError(f"no nonzero ground truth after {MAX_REDRAWS} draws")

    observed = clean / clean_norm
    noise = rng.standard_normal((I, J, K))
    if spec.sigma_N > 0:
        observed = observed + spec.sigma_N * noise / frobenius_norm(noise)
    return Tensor3(observed), truth
