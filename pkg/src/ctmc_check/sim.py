"""Gillespie simulation over an explicit CTMC.

Random numbers come from SplitMix64. Run ``r`` of a simulation seeded
with ``seed`` uses its own SplitMix64 stream whose seed is the
``(r+1)``-th output of SplitMix64(``seed``). Because SplitMix64 output
``i`` is a pure function of ``state0 + i*GAMMA``, any draw of any run can
be computed directly; batches of runs are advanced in lockstep with numpy
and give bit-identical results to running each run alone.

Jump ``j`` of a run consumes draws ``2j`` (sojourn) and ``2j+1``
(successor choice). Sojourns use the inverse CDF ``-ln(1-u)/E``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .compose import Ctmc
from .errors import NumericsError
from .lang import ast as A

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 2.0**-53


def _mix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def splitmix64(state0: Union[int, np.ndarray], index: Union[int, np.ndarray]) -> np.ndarray:
    """Output number ``index`` (0-based) of SplitMix64 seeded with ``state0``."""
    s = np.asarray(state0, dtype=np.uint64)
    i = np.asarray(index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix(s + (i + np.uint64(1)) * GAMMA)


def run_keys(seed: int, runs: np.ndarray) -> np.ndarray:
    """Per-run stream seeds."""
    return splitmix64(np.uint64(seed % 2**64), np.asarray(runs, dtype=np.uint64))


def uniforms(keys: np.ndarray, index: Union[int, np.ndarray]) -> np.ndarray:
    """Uniform doubles in [0, 1) from draw ``index`` of each stream."""
    return (splitmix64(keys, index) >> np.uint64(11)).astype(np.float64) * _TWO_M53


@dataclass(frozen=True)
class Trajectory:
    seed: int
    states: tuple[int, ...]
    sojourns: tuple[float, ...]
    horizon: float

    def entry_times(self) -> list[float]:
        out, t = [], 0.0
        for d in self.sojourns:
            out.append(t)
            t += d
        return out

    def state_at(self, t: float) -> int:
        clock = 0.0
        for s, d in zip(self.states, self.sojourns):
            clock += d
            if t < clock:
                return s
        return self.states[-1]


class _Sampler:
    """Vectorized successor selection over the CSR rate matrix."""

    def __init__(self, ctmc: Ctmc):
        rates = ctmc.rates
        self.indptr = rates.indptr.astype(np.int64)
        self.indices = rates.indices.astype(np.int64)
        self.cum = np.cumsum(rates.data)
        self.exit_rates = ctmc.exit_rates

    def successor(self, states: np.ndarray, u: np.ndarray) -> np.ndarray:
        start = self.indptr[states]
        end = self.indptr[states + 1]
        base = np.where(start > 0, self.cum[np.maximum(start - 1, 0)], 0.0)
        total = self.cum[end - 1] - base
        pos = np.searchsorted(self.cum, base + u * total, side="right")
        pos = np.clip(pos, start, end - 1)
        return self.indices[pos]


def _advance(sampler: _Sampler, keys: np.ndarray, state: np.ndarray, clock: np.ndarray,
             active: np.ndarray, step: int, horizon: float):
    """One lockstep jump for the active runs; returns the runs that jumped."""
    idx = np.flatnonzero(active)
    s = state[idx]
    exit_rate = sampler.exit_rates[s]
    moving = exit_rate > 0
    u1 = uniforms(keys[idx], 2 * step)
    with np.errstate(divide="ignore"):
        dwell = np.where(moving, -np.log1p(-u1) / np.where(moving, exit_rate, 1.0), np.inf)
    arrive = clock[idx] + dwell
    jumps = moving & (arrive <= horizon)
    active[idx[~jumps]] = False
    jump_idx = idx[jumps]
    if jump_idx.size:
        u2 = uniforms(keys[jump_idx], 2 * step + 1)
        state[jump_idx] = sampler.successor(state[jump_idx], u2)
        clock[jump_idx] = arrive[jumps]
    return jump_idx, dwell[jumps]


def simulate(ctmc: Ctmc, seed: int, horizon: float, run: int = 0) -> Trajectory:
    """One Gillespie trajectory of run ``run`` up to ``horizon``."""
    if not horizon > 0:
        raise NumericsError("simulation horizon must be positive")
    sampler = _Sampler(ctmc)
    keys = run_keys(seed, np.array([run]))
    state = np.array([ctmc.init_index], dtype=np.int64)
    clock = np.zeros(1)
    active = np.ones(1, dtype=bool)
    states, sojourns = [int(state[0])], []
    step = 0
    while active[0]:
        jumped, dwell = _advance(sampler, keys, state, clock, active, step, horizon)
        if not jumped.size:
            break
        sojourns.append(float(dwell[0]))
        states.append(int(state[0]))
        step += 1
    sojourns.append(horizon - float(clock[0]))
    return Trajectory(seed, tuple(states), tuple(sojourns), float(horizon))


def states_at(ctmc: Ctmc, t: float, n_runs: int, seed: int, first_run: int = 0,
              batch: int = 100_000) -> np.ndarray:
    """State index at time ``t`` of runs ``first_run .. first_run+n_runs-1``."""
    sampler = _Sampler(ctmc)
    out = np.empty(n_runs, dtype=np.int64)
    for lo in range(0, n_runs, batch):
        hi = min(n_runs, lo + batch)
        keys = run_keys(seed, np.arange(first_run + lo, first_run + hi))
        state = np.full(hi - lo, ctmc.init_index, dtype=np.int64)
        clock = np.zeros(hi - lo)
        active = np.ones(hi - lo, dtype=bool)
        step = 0
        while active.any():
            _advance(sampler, keys, state, clock, active, step, t)
            step += 1
        out[lo:hi] = state
    return out


def estimate_transient(ctmc: Ctmc, expr: Union[str, A.Expr], t: float, n_runs: int,
                       seed: int, batch: int = 100_000) -> tuple[float, float]:
    """Monte-Carlo estimate of P(expr holds at time t) with a 95% half-width
    (normal approximation)."""
    if n_runs < 1:
        raise NumericsError("need at least one run")
    mask = ctmc.sat_mask(expr)
    if t == 0:
        hits = np.full(n_runs, mask[ctmc.init_index])
    else:
        hits = mask[states_at(ctmc, t, n_runs, seed, batch=batch)]
    p = float(hits.mean())
    return p, 1.96 * math.sqrt(p * (1 - p) / n_runs)


def write_trajectory_csv(ctmc: Ctmc, traj: Trajectory, path) -> None:
    """CSV with columns ``time,stateIndex,<variables...>``, one row per entered state."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "stateIndex", *(v.name for v in ctmc.variables)])
        for t, s in zip(traj.entry_times(), traj.states):
            writer.writerow(["%.12g" % t, s, *ctmc.states[s].tolist()])
