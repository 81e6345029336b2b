"""Shared RANSAC bookkeeping"""

from __future__ import annotations

import math

import numpy as np

from calyx_assess.arrays import IntArray


def required_iterations(inlier_fraction: float, sample_size: int, confidence: float, cap: int) -> int:
    """Number of samples needed to draw one all-inlier sample with the given confidence, capped at cap"""
    if inlier_fraction <= 0:
        return cap
    p_good = inlier_fraction**sample_size
    if p_good >= 1.0:
        return 1
    needed = math.log(1.0 - confidence) / math.log(1.0 - p_good)
    return min(cap, max(1, math.ceil(needed)))


def draw_samples(rng: np.random.Generator, population: int, sample_size: int, count: int) -> IntArray:
    """Draw count samples of sample_size distinct indices from range(population)"""
    keys = rng.random((count, population))
    return np.argpartition(keys, sample_size - 1, axis=1)[:, :sample_size].astype(np.int64)
