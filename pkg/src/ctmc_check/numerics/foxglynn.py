"""Truncated Poisson weights for uniformization.

Weights are computed outward from the mode with the ratio recurrences
p(k+1) = p(k) qt/(k+1) and p(k-1) = p(k) k/qt, starting from a scaled
value of 1 at the mode, so nothing underflows for qt up to ~1e9.
Tails are bounded by geometric series once the ratios drop below 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import NumericsError

_MIN_EPSILON = 1e-300


@dataclass(frozen=True)
class FoxGlynnWeights:
    """``weights[k - left] / total_weight`` is the Poisson(qt) pmf at k."""

    qt: float
    left: int
    right: int
    weights: np.ndarray
    total_weight: float

    def probabilities(self) -> np.ndarray:
        return self.weights / self.total_weight

    def __len__(self) -> int:
        return self.right - self.left + 1


def _log_poisson_at_mode(qt: float, mode: int) -> float:
    if mode < 20:
        return -qt + mode * math.log(qt) - math.lgamma(mode + 1)
    # Stirling form: the large terms of -qt + m log qt - log m! cancel analytically
    m = float(mode)
    frac = qt - m
    stirling = 1 / (12 * m) - 1 / (360 * m**3) + 1 / (1260 * m**5)
    return m * math.log1p(frac / m) - frac - 0.5 * math.log(2 * math.pi * m) - stirling


def fox_glynn(qt: float, epsilon: float) -> FoxGlynnWeights:
    """Poisson window ``[left, right]`` whose omitted mass is below ``epsilon``."""
    if not (qt >= 0 and math.isfinite(qt)):
        raise NumericsError(f"Poisson parameter must be finite and non-negative, got {qt}")
    if not 0 < epsilon < 1:
        raise NumericsError(f"epsilon must lie in (0, 1), got {epsilon}")
    if epsilon < _MIN_EPSILON:
        raise NumericsError(f"epsilon {epsilon} too small for representable scaling")
    if qt == 0:
        return FoxGlynnWeights(0.0, 0, 0, np.ones(1), 1.0)

    mode = int(math.floor(qt))
    mode_pmf = math.exp(_log_poisson_at_mode(qt, mode))
    # every tail test below is done on the scaled weights
    scaled_eps = 0.5 * epsilon / mode_pmf

    right_w = [1.0]
    k, w = mode, 1.0
    while True:
        nxt = w * qt / (k + 1)
        ratio = qt / (k + 2)
        if k + 1 > qt and ratio < 1 and nxt / (1 - ratio) <= scaled_eps:
            break
        k, w = k + 1, nxt
        right_w.append(w)
    right = k

    left_w = []
    k, w = mode, 1.0
    while k > 0:
        nxt = w * k / qt
        ratio = (k - 1) / qt
        if nxt / (1 - ratio) <= scaled_eps:
            break
        k, w = k - 1, nxt
        left_w.append(w)
    left = k

    weights = np.array(left_w[::-1] + right_w)
    return FoxGlynnWeights(float(qt), left, right, weights, 1.0 / mode_pmf)
