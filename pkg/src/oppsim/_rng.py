"""Draw primitives shared by the Python engine and mirrored by the Cython kernel.

Every random decision made during a trial goes through these two helpers so
that both backends consume the generator's ``next_double`` stream in the same
order and produce identical results.
"""
from __future__ import annotations

import math

import numpy as np


def uniform_index(rng: np.random.Generator, m: int) -> int:
    """Uniform integer in ``[0, m)`` from one uniform double."""
    j = int(rng.random() * m)
    return j if j < m else m - 1


def exp_interval(rng: np.random.Generator, rate: float) -> float:
    """Exp(rate) waiting time, strictly positive."""
    u = rng.random()
    while u == 0.0:
        u = rng.random()
    return -math.log1p(-u) / rate


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)
