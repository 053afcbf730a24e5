"""Long-run behaviour: BSCC stationary distributions, absorption
probabilities, unbounded-until probabilities and reachability rewards."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import NumericsError
from .graph import BsccDecomposition, bscc_decompose, prob0, prob1
from .solvers import SolveStats, SolverConfig, solve, stationary
from .transient import as_distribution, clamp_negative


@dataclass(frozen=True)
class Chain:
    """Bare rate matrix plus exit rates; what the kernels actually need."""

    rates: sp.csr_matrix
    exit_rates: np.ndarray

    @property
    def n_states(self) -> int:
        return self.rates.shape[0]


@dataclass
class SteadyState:
    decomposition: BsccDecomposition
    stationary: list[np.ndarray]  # one distribution per BSCC, aligned with its members
    stats: SolveStats = field(default_factory=SolveStats)

    def residuals(self, chain) -> list[float]:
        """||pi Q_B||_inf for each BSCC."""
        out = []
        for members, pi in zip(self.decomposition.bsccs, self.stationary):
            sub = chain.rates[members][:, members]
            flow = sub.T @ pi - chain.exit_rates[members] * pi
            out.append(float(np.max(np.abs(flow))) if flow.size else 0.0)
        return out


def bscc_stationary(chain, config: SolverConfig = SolverConfig(),
                    decomposition: BsccDecomposition | None = None) -> SteadyState:
    dec = decomposition or bscc_decompose(chain.rates)
    stats = SolveStats()
    dists = []
    for members in dec.bsccs:
        sub = chain.rates[members][:, members]
        dists.append(stationary(sub, chain.exit_rates[members], config, stats))
    return SteadyState(dec, dists, stats)


def _transient_system(chain, transient: np.ndarray) -> sp.csr_matrix:
    """diag(E_T) - R_TT over the transient states."""
    sub = chain.rates[transient][:, transient]
    return (sp.diags(chain.exit_rates[transient]) - sub).tocsr()


def absorption_from(chain, initial: np.ndarray, dec: BsccDecomposition,
                    config: SolverConfig = SolverConfig(),
                    stats: SolveStats | None = None) -> np.ndarray:
    """Probability of ending up in each BSCC from an initial distribution."""
    if len(dec.bsccs) == 1:
        # a finite chain leaves its transient states with probability one
        return np.ones(1)
    out = np.array([initial[m].sum() for m in dec.bsccs])
    T = dec.transient
    start = initial[T]
    if T.size and start.any():
        # expected sojourn time per transient state: y (diag(E) - R)_TT = pi0_T
        y = solve(_transient_system(chain, T).T.tocsr(), start, config, stats=stats)
        flow = chain.rates[T].T @ y
        out = out + np.array([flow[m].sum() for m in dec.bsccs])
    return out


def absorption_per_state(chain, dec: BsccDecomposition, config: SolverConfig = SolverConfig(),
                         stats: SolveStats | None = None) -> np.ndarray:
    """Matrix (states x BSCCs) of absorption probabilities."""
    n = chain.n_states
    if len(dec.bsccs) == 1:
        return np.ones((n, 1))
    out = np.zeros((n, len(dec.bsccs)))
    for k, members in enumerate(dec.bsccs):
        out[members, k] = 1.0
    T = dec.transient
    if T.size:
        A = _transient_system(chain, T)
        for k, members in enumerate(dec.bsccs):
            target = np.zeros(n)
            target[members] = 1.0
            b = chain.rates[T] @ target
            if b.any():
                out[T, k] = solve(A, b, config, stats=stats)
    return out


def steady_state_distribution(ctmc, initial, config: SolverConfig = SolverConfig(),
                              steady: SteadyState | None = None) -> np.ndarray:
    """Long-run state distribution from ``initial`` (index or vector)."""
    dist = as_distribution(initial, ctmc.n_states)
    steady = steady or bscc_stationary(ctmc, config)
    weights = absorption_from(ctmc, dist, steady.decomposition, config, steady.stats)
    out = np.zeros(ctmc.n_states)
    for w, members, pi in zip(weights, steady.decomposition.bsccs, steady.stationary):
        out[members] += w * pi
    return clamp_negative(out)


def steady_state_values(ctmc, values: np.ndarray, config: SolverConfig = SolverConfig(),
                        steady: SteadyState | None = None) -> np.ndarray:
    """Per starting state, the long-run average of ``values``."""
    steady = steady or bscc_stationary(ctmc, config)
    per_bscc = np.array([pi @ values[m] for m, pi in
                         zip(steady.decomposition.bsccs, steady.stationary)])
    if not per_bscc.size:
        return np.zeros(ctmc.n_states)
    return absorption_per_state(ctmc, steady.decomposition, config, steady.stats) @ per_bscc


def until_probabilities(chain, left: np.ndarray, right: np.ndarray,
                        config: SolverConfig = SolverConfig(),
                        stats: SolveStats | None = None) -> np.ndarray:
    """Per-state probability of ``left U right`` without time bound."""
    left = np.asarray(left, dtype=bool)
    right = np.asarray(right, dtype=bool)
    no = prob0(chain.rates, left, right)
    yes = prob1(chain.rates, left, right, no)
    out = yes.astype(float)
    maybe = np.flatnonzero(~no & ~yes)
    if maybe.size:
        A = _transient_system(chain, maybe)
        b = chain.rates[maybe] @ yes.astype(float)
        out[maybe] = solve(A, b, config, stats=stats)
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class RewardValues:
    """Per-state expected rewards with infinity carried as a separate flag."""

    values: np.ndarray
    infinite: np.ndarray

    def __getitem__(self, i: int) -> float:
        return float("inf") if self.infinite[i] else float(self.values[i])

    def format(self, i: int, fmt: str = "%.12g") -> str:
        return "inf" if self.infinite[i] else fmt % self.values[i]


def reachability_reward(ctmc, reward_rates: np.ndarray, target: np.ndarray,
                        config: SolverConfig = SolverConfig(),
                        stats: SolveStats | None = None) -> RewardValues:
    """Expected reward accumulated before first reaching ``target``.

    ``reward_rates`` is the per-state reward rate (state rewards plus
    rate-weighted transition rewards). States that miss the target with
    positive probability get an infinite value.
    """
    target = np.asarray(target, dtype=bool)
    if target.shape != (ctmc.n_states,):
        raise NumericsError("target mask has the wrong length")
    everywhere = np.ones(ctmc.n_states, dtype=bool)
    sure = prob1(ctmc.rates, everywhere, target)
    values = np.zeros(ctmc.n_states)
    maybe = np.flatnonzero(sure & ~target)
    if maybe.size:
        A = _transient_system(ctmc, maybe)
        values[maybe] = solve(A, np.asarray(reward_rates, dtype=float)[maybe], config, stats=stats)
    return RewardValues(values, ~sure)
