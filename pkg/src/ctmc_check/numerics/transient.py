"""Uniformization: transient distributions and cumulative occupation.

With q >= max exit rate, P = I + Q/q is stochastic and

    pi(t) = sum_k Poisson(k; qt) pi(0) P^k
    int_0^t pi(s) ds = (1/q) sum_k (1 - sum_{j<=k} Poisson(j; qt)) pi(0) P^k

Both series are truncated with Fox-Glynn weights.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.sparse as sp

from ..errors import NumericsError
from .foxglynn import FoxGlynnWeights, fox_glynn

log = logging.getLogger(__name__)

NEGATIVE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class UniformizationConfig:
    epsilon: float = 1e-12
    factor: float = 1.02

    def __post_init__(self):
        if self.factor < 1:
            raise NumericsError("uniformization factor must be at least 1")


@dataclass
class UniformizationStats:
    rate: float = 0.0
    left: int = 0
    right: int = 0
    iterations: int = 0


def uniformization_rate(exit_rates: np.ndarray, factor: float = 1.02) -> float:
    top = float(np.max(exit_rates)) if len(exit_rates) else 0.0
    return factor * top if top > 0 else 1.0


class Uniformized:
    """The DTMC P = I + Q/q of a rate matrix, applied without forming P."""

    def __init__(self, rates: sp.spmatrix, exit_rates: np.ndarray,
                 config: UniformizationConfig = UniformizationConfig()):
        self.rates = sp.csr_matrix(rates)
        self.rates_t = self.rates.T.tocsr()
        self.exit_rates = np.asarray(exit_rates, dtype=float)
        self.q = uniformization_rate(self.exit_rates, config.factor)
        self.config = config
        self._stay = 1.0 - self.exit_rates / self.q

    def forward(self, v: np.ndarray) -> np.ndarray:
        """Row-vector product v P."""
        return self._stay * v + (self.rates_t @ v) / self.q

    def backward(self, x: np.ndarray) -> np.ndarray:
        """Column-vector product P x."""
        return self._stay * x + (self.rates @ x) / self.q

    def weights(self, t: float) -> FoxGlynnWeights:
        return fox_glynn(self.q * t, self.config.epsilon)


def absorbing(rates: sp.spmatrix, mask: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]:
    """Copy of the chain with every state in ``mask`` made absorbing."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        rates = sp.csr_matrix(rates)
        return rates, np.asarray(rates.sum(axis=1)).ravel()
    keep = sp.diags((~np.asarray(mask, dtype=bool)).astype(float))
    out = (keep @ sp.csr_matrix(rates)).tocsr()
    out.eliminate_zeros()
    return out, np.asarray(out.sum(axis=1)).ravel()


def as_distribution(initial: Union[int, np.ndarray], n: int) -> np.ndarray:
    if isinstance(initial, (int, np.integer)):
        if not 0 <= initial < n:
            raise NumericsError(f"initial state {initial} out of range")
        out = np.zeros(n)
        out[initial] = 1.0
        return out
    dist = np.asarray(initial, dtype=float)
    if dist.shape != (n,):
        raise NumericsError(f"initial distribution has shape {dist.shape}, expected ({n},)")
    if (dist < 0).any() or abs(dist.sum() - 1.0) > 1e-12:
        raise NumericsError("initial vector is not a probability distribution")
    return dist


def _check_time(t: float) -> float:
    t = float(t)
    if not (t >= 0 and np.isfinite(t)):
        raise NumericsError(f"time must be finite and non-negative, got {t}")
    return t


def clamp_negative(v: np.ndarray, what: str = "distribution") -> np.ndarray:
    low = v.min() if v.size else 0.0
    if low < 0:
        if low < -NEGATIVE_TOLERANCE:
            raise NumericsError(f"{what} has materially negative entry {low:.3e}")
        log.warning("clamping %s entries down to %.3e to zero", what, low)
        v = np.where(v < 0, 0.0, v)
    return v


def transient_series(unif: Uniformized, v0: np.ndarray, t: float, backward: bool = False,
                     stats: UniformizationStats | None = None) -> np.ndarray:
    """sum_k Poisson(k; qt) applied k times to ``v0`` (forward or backward)."""
    t = _check_time(t)
    if t == 0:
        return np.array(v0, dtype=float)
    fg = unif.weights(t)
    step = unif.backward if backward else unif.forward
    probs = fg.probabilities()
    v = np.array(v0, dtype=float)
    acc = np.zeros_like(v)
    for k in range(fg.right + 1):
        if k >= fg.left:
            acc += probs[k - fg.left] * v
        if k < fg.right:
            v = step(v)
    if stats is not None:
        stats.rate, stats.left, stats.right = unif.q, fg.left, fg.right
        stats.iterations += fg.right
    return acc


def occupation_series(unif: Uniformized, v0: np.ndarray, t: float, backward: bool = False,
                      stats: UniformizationStats | None = None) -> np.ndarray:
    """Integral over [0, t] of the transient series, by the Poisson-tail formula."""
    t = _check_time(t)
    v = np.array(v0, dtype=float)
    if t == 0:
        return np.zeros_like(v)
    fg = unif.weights(t)
    step = unif.backward if backward else unif.forward
    probs = fg.probabilities()
    acc = np.zeros_like(v)
    cdf = 0.0
    for k in range(fg.right + 1):
        if k >= fg.left:
            cdf += probs[k - fg.left]
        acc += (max(0.0, 1.0 - cdf) / unif.q) * v
        if k < fg.right:
            v = step(v)
    if stats is not None:
        stats.rate, stats.left, stats.right = unif.q, fg.left, fg.right
        stats.iterations += fg.right
    return acc


def transient_distribution(ctmc, initial, t: float,
                           config: UniformizationConfig = UniformizationConfig(),
                           stats: UniformizationStats | None = None) -> np.ndarray:
    """State distribution at time ``t`` starting from ``initial``.

    ``initial`` is a state index or a probability vector.
    """
    dist = as_distribution(initial, ctmc.n_states)
    t = _check_time(t)
    if t == 0:
        return dist.copy()
    unif = Uniformized(ctmc.rates, ctmc.exit_rates, config)
    return clamp_negative(transient_series(unif, dist, t, stats=stats))


def transient_values(ctmc, values: np.ndarray, t: float,
                     config: UniformizationConfig = UniformizationConfig(),
                     stats: UniformizationStats | None = None) -> np.ndarray:
    """Per starting state, the expectation of ``values`` at time ``t``."""
    unif = Uniformized(ctmc.rates, ctmc.exit_rates, config)
    return transient_series(unif, np.asarray(values, dtype=float), t, backward=True, stats=stats)


def occupation_times(ctmc, initial, t: float,
                     config: UniformizationConfig = UniformizationConfig(),
                     stats: UniformizationStats | None = None) -> np.ndarray:
    """Expected time spent in each state during [0, t]."""
    dist = as_distribution(initial, ctmc.n_states)
    unif = Uniformized(ctmc.rates, ctmc.exit_rates, config)
    return clamp_negative(occupation_series(unif, dist, t, stats=stats), "occupation vector")


def cumulative_state_reward(ctmc, reward: str, initial, t: float,
                            config: UniformizationConfig = UniformizationConfig(),
                            stats: UniformizationStats | None = None) -> float:
    """Expected reward accumulated during [0, t].

    State rewards accrue at their rate per time unit; transition rewards
    enter as their rate-weighted contribution per state.
    """
    if reward not in ctmc.state_rewards:
        raise NumericsError(f"unknown reward structure {reward!r}")
    occ = occupation_times(ctmc, initial, t, config, stats)
    return float(occ @ ctmc.reward_rates(reward))


def cumulative_values(ctmc, reward_rates: np.ndarray, t: float,
                      config: UniformizationConfig = UniformizationConfig(),
                      stats: UniformizationStats | None = None) -> np.ndarray:
    """Per starting state, the expected reward accumulated during [0, t]."""
    unif = Uniformized(ctmc.rates, ctmc.exit_rates, config)
    return occupation_series(unif, np.asarray(reward_rates, dtype=float), t, backward=True,
                             stats=stats)
