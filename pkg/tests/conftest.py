"""Shared fixtures: seeded generators and random BTD factors."""

import numpy as np
import pytest

from core.products import BlockFactors


def random_factors(rng: np.random.Generator, dims, L: int, R: int,
                   nonneg: bool = False) -> BlockFactors:
    I, J, K = dims
    draw = rng.random if nonneg else rng.standard_normal
    return BlockFactors(A=draw((I, L * R)), B=draw((J, L * R)), C=draw((K, R)), L=L, R=R)


@pytest.fixture
def rng():
    return np.random.default_rng(20020225)


@pytest.fixture
def make_factors(rng):
    def _make(dims=(4, 5, 6), L=2, R=3, nonneg=False):
        return random_factors(rng, dims, L, R, nonneg)
    return _make
