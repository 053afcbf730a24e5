"""CSL and reward-property evaluation over an explicit CTMC."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .compose import Ctmc
from .errors import CheckError
from .lang import ast as A
from .lang.parser import parse_property
from .lang.printer import format_formula
from .numerics import steady as S
from .numerics import transient as T
from .numerics.solvers import SolverConfig, SolveStats


@dataclass(frozen=True)
class CheckConfig:
    uniformization: T.UniformizationConfig = T.UniformizationConfig()
    solver: SolverConfig = SolverConfig()

    @property
    def marginal_tolerance(self) -> float:
        return self.solver.epsilon


@dataclass
class CheckResult:
    """Outcome of checking one formula.

    Quantitative queries fill ``value`` (the initial state's value);
    boolean formulas fill ``satisfying`` and ``holds`` (truth in the
    initial state). ``values`` carries the per-state vector when asked for.
    """

    formula: str
    value: Optional[float] = None
    infinite: bool = False
    satisfying: Optional[np.ndarray] = None
    holds: Optional[bool] = None
    values: Optional[np.ndarray] = None
    values_infinite: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def is_query(self) -> bool:
        return self.satisfying is None

    def to_json(self) -> dict:
        out: dict = {"formula": self.formula}
        if self.is_query:
            out["value"] = "inf" if self.infinite else self.value
        else:
            out["satisfying_count"] = int(self.satisfying.size)
            out["holds"] = self.holds
        if self.values is not None:
            inf = self.values_infinite
            out["values"] = ["inf" if inf is not None and inf[i] else float(v)
                             for i, v in enumerate(self.values)]
        out["diagnostics"] = self.diagnostics
        return out


def bound_compare(value: float, bound: A.Bound, epsilon: float = 1e-9) -> tuple[bool, bool]:
    """Compare ``value`` with ``bound``; second item flags a marginal result
    (value within ``epsilon`` of the threshold)."""
    threshold = float(bound.value)
    ops = {"<": value < threshold, "<=": value <= threshold,
           ">": value > threshold, ">=": value >= threshold}
    if bound.op not in ops:
        raise CheckError(f"cannot compare against {bound.op!r}")
    marginal = bool(np.isfinite(value) and abs(value - threshold) < epsilon)
    return bool(ops[bound.op]), marginal


def _compare_vector(values: np.ndarray, infinite: Optional[np.ndarray], bound: A.Bound) -> np.ndarray:
    v = np.where(infinite, np.inf, values) if infinite is not None else values
    threshold = float(bound.value)
    return {"<": v < threshold, "<=": v <= threshold,
            ">": v > threshold, ">=": v >= threshold}[bound.op]


def validate_formula(formula: A.CslFormula, model_rewards=None) -> None:
    """Reject ``=?`` anywhere below the top level and unknown reward names."""

    def walk(f, top):
        if isinstance(f, (A.ProbOp, A.SteadyOp, A.RewardOp)):
            if f.bound.is_query and not top:
                raise CheckError("quantitative '=?' operator nested inside a formula")
            if isinstance(f, A.RewardOp) and model_rewards is not None and f.reward not in model_rewards:
                raise CheckError(f"undefined reward structure {f.reward!r}")
        for child in _children(f):
            walk(child, False)

    walk(formula, True)


def _children(f):
    if isinstance(f, A.NotF):
        return [f.operand]
    if isinstance(f, (A.AndF, A.OrF)):
        return [f.left, f.right]
    if isinstance(f, A.ProbOp):
        p = f.path
        return [p.target] if isinstance(p, A.Eventually) else [p.left, p.right]
    if isinstance(f, A.SteadyOp):
        return [f.formula]
    if isinstance(f, A.RewardOp) and isinstance(f.kind, A.ReachReward):
        return [f.kind.target]
    return []


class ModelChecker:
    """Checks formulas against one immutable CTMC, caching long-run analysis."""

    def __init__(self, ctmc: Ctmc, config: CheckConfig = CheckConfig()):
        self.ctmc = ctmc
        self.config = config
        self._steady: Optional[S.SteadyState] = None
        self._steady_init: Optional[np.ndarray] = None
        self._unif_stats = T.UniformizationStats()
        self._solve_stats = SolveStats()
        self._steady_mark = 0

    # -- public -----------------------------------------------------------

    def check(self, formula: Union[str, A.CslFormula], all_states: bool = False) -> CheckResult:
        if isinstance(formula, str):
            formula = parse_property(formula)
        validate_formula(formula, self.ctmc.state_rewards)
        self._unif_stats = T.UniformizationStats()
        self._solve_stats = SolveStats()
        # long-run solves are cached across checks; report only the work done by this one
        self._steady_mark = self._steady.stats.iterations if self._steady else 0
        started = time.perf_counter()
        text = format_formula(formula)
        init = self.ctmc.init_index
        result = CheckResult(text)
        if isinstance(formula, (A.ProbOp, A.SteadyOp, A.RewardOp)) and formula.bound.is_query:
            if all_states:
                values, inf = self._values(formula)
                result.values, result.values_infinite = values, inf
                result.value = float(values[init])
                result.infinite = bool(inf is not None and inf[init])
            else:
                result.value, result.infinite = self._initial_value(formula)
            if isinstance(formula, (A.ProbOp, A.SteadyOp)):
                result.value = min(1.0, max(0.0, result.value))
        else:
            mask = self._sat(formula)
            result.satisfying = np.flatnonzero(mask)
            result.holds = bool(mask[init])
            if isinstance(formula, (A.ProbOp, A.SteadyOp, A.RewardOp)):
                values, inf = self._values(formula)
                if not (inf is not None and inf[init]):
                    _, marginal = bound_compare(float(values[init]), formula.bound,
                                                self.config.marginal_tolerance)
                    result.diagnostics["marginal"] = marginal
                if all_states:
                    result.values, result.values_infinite = values, inf
        result.diagnostics.update(self._diagnostics(time.perf_counter() - started))
        return result

    def sat(self, formula: Union[str, A.StateFormula]) -> np.ndarray:
        if isinstance(formula, str):
            formula = parse_property(formula)
        validate_formula(formula, self.ctmc.state_rewards)
        return self._sat(formula)

    # -- internals --------------------------------------------------------

    def _diagnostics(self, elapsed: float) -> dict:
        d = {"wall_time_s": round(elapsed, 6)}
        if self._unif_stats.iterations:
            d.update(uniformization_rate=self._unif_stats.rate,
                     truncation=[self._unif_stats.left, self._unif_stats.right],
                     uniformization_steps=self._unif_stats.iterations)
        iterations, residual = self._solve_stats.iterations, self._solve_stats.residual
        if self._steady is not None and self._steady.stats.iterations > self._steady_mark:
            iterations += self._steady.stats.iterations - self._steady_mark
            residual = max(residual, self._steady.stats.residual)
        if iterations:
            d.update(solver_iterations=iterations, solver_residual=residual)
        return d

    def _sat(self, f: A.StateFormula) -> np.ndarray:
        n = self.ctmc.n_states
        if isinstance(f, A.TrueF):
            return np.ones(n, dtype=bool)
        if isinstance(f, A.FalseF):
            return np.zeros(n, dtype=bool)
        if isinstance(f, A.Atom):
            try:
                return self.ctmc.sat_mask(f.expr)
            except Exception as exc:
                raise CheckError(f"cannot evaluate atomic proposition: {exc}") from exc
        if isinstance(f, A.NotF):
            return ~self._sat(f.operand)
        if isinstance(f, A.AndF):
            return self._sat(f.left) & self._sat(f.right)
        if isinstance(f, A.OrF):
            return self._sat(f.left) | self._sat(f.right)
        if isinstance(f, (A.ProbOp, A.SteadyOp, A.RewardOp)):
            values, inf = self._values(f)
            return _compare_vector(values, inf, f.bound)
        raise CheckError(f"unsupported formula {f!r}")

    def _reward_rates(self, name: str, with_transitions: bool = True) -> np.ndarray:
        if name not in self.ctmc.state_rewards:
            raise CheckError(f"undefined reward structure {name!r}")
        if with_transitions:
            return self.ctmc.reward_rates(name)
        return self.ctmc.state_rewards[name]

    def _steady_state(self) -> S.SteadyState:
        if self._steady is None:
            self._steady = S.bscc_stationary(self.ctmc, self.config.solver)
        return self._steady

    def _steady_from_init(self) -> np.ndarray:
        if self._steady_init is None:
            self._steady_init = S.steady_state_distribution(
                self.ctmc, self.ctmc.init_index, self.config.solver, self._steady_state())
        return self._steady_init

    # per-state values of quantitative operators (backward computations)

    def _values(self, f) -> tuple[np.ndarray, Optional[np.ndarray]]:
        ctmc, ucfg, scfg = self.ctmc, self.config.uniformization, self.config.solver
        if isinstance(f, A.ProbOp):
            return np.clip(self._path_values(f.path), 0.0, 1.0), None
        if isinstance(f, A.SteadyOp):
            target = self._sat(f.formula).astype(float)
            return S.steady_state_values(ctmc, target, scfg, self._steady_state()), None
        kind = f.kind
        if isinstance(kind, A.InstantReward):
            r = self._reward_rates(f.reward, with_transitions=False)
            return T.transient_values(ctmc, r, float(kind.time), ucfg, self._unif_stats), None
        if isinstance(kind, A.CumulativeReward):
            r = self._reward_rates(f.reward)
            return T.cumulative_values(ctmc, r, float(kind.time), ucfg, self._unif_stats), None
        if isinstance(kind, A.ReachReward):
            r = self._reward_rates(f.reward)
            res = S.reachability_reward(ctmc, r, self._sat(kind.target), scfg, self._solve_stats)
            return res.values, res.infinite
        r = self._reward_rates(f.reward)
        return S.steady_state_values(ctmc, r, scfg, self._steady_state()), None

    def _path_masks(self, path):
        if isinstance(path, A.Eventually):
            path = path.as_until()
        return self._sat(path.left), self._sat(path.right), path.interval

    def _path_values(self, path) -> np.ndarray:
        left, right, iv = self._path_masks(path)
        ctmc, ucfg, scfg = self.ctmc, self.config.uniformization, self.config.solver
        low = float(iv.low)
        if iv.high is None:
            second = S.until_probabilities(ctmc, left, right, scfg, self._solve_stats)
        elif low == 0:
            return self._bounded_until_values(left, right, float(iv.high))
        else:
            second = self._bounded_until_values(left, right, float(iv.high) - low)
        if low == 0:
            return second
        rates, exits = T.absorbing(ctmc.rates, ~left)
        phase1 = S.Chain(rates, exits)
        return T.transient_values(phase1, left * second, low, ucfg, self._unif_stats)

    def _bounded_until_values(self, left, right, t: float) -> np.ndarray:
        target = right.astype(float)
        if t == 0:
            return target
        rates, exits = T.absorbing(self.ctmc.rates, ~left | right)
        out = T.transient_values(S.Chain(rates, exits), target, t,
                                 self.config.uniformization, self._unif_stats)
        # absorbing states are decided already; don't let the truncated tail blur them
        out[right] = 1.0
        out[~left & ~right] = 0.0
        return out

    # value at the initial state (forward computations)

    def _initial_value(self, f) -> tuple[float, bool]:
        ctmc, ucfg = self.ctmc, self.config.uniformization
        init = ctmc.init_index
        if isinstance(f, A.ProbOp):
            return self._path_initial(f.path), False
        if isinstance(f, A.SteadyOp):
            pi = self._steady_from_init()
            return float(pi[self._sat(f.formula)].sum()), False
        kind = f.kind
        if isinstance(kind, A.InstantReward):
            pi = T.transient_distribution(ctmc, init, float(kind.time), ucfg, self._unif_stats)
            return float(pi @ self._reward_rates(f.reward, with_transitions=False)), False
        if isinstance(kind, A.CumulativeReward):
            occ = T.occupation_times(ctmc, init, float(kind.time), ucfg, self._unif_stats)
            return float(occ @ self._reward_rates(f.reward)), False
        if isinstance(kind, A.ReachReward):
            values, inf = self._values(f)
            return float(values[init]), bool(inf[init])
        pi = self._steady_from_init()
        return float(pi @ self._reward_rates(f.reward)), False

    def _path_initial(self, path) -> float:
        left, right, iv = self._path_masks(path)
        ctmc, ucfg, scfg = self.ctmc, self.config.uniformization, self.config.solver
        init = ctmc.init_index
        low = float(iv.low)
        if low == 0 and iv.high is not None:
            return self._bounded_until_forward(T.as_distribution(init, ctmc.n_states),
                                               left, right, float(iv.high))
        if low == 0:
            return float(S.until_probabilities(ctmc, left, right, scfg, self._solve_stats)[init])
        # phase one: stay inside `left` until the lower bound
        rates, exits = T.absorbing(ctmc.rates, ~left)
        dist = T.transient_distribution(S.Chain(rates, exits), init, low, ucfg, self._unif_stats)
        dist = np.where(left, dist, 0.0)
        if iv.high is None:
            return float(dist @ S.until_probabilities(ctmc, left, right, scfg, self._solve_stats))
        return self._bounded_until_forward(dist, left, right, float(iv.high) - low)

    def _bounded_until_forward(self, dist, left, right, t: float) -> float:
        if t == 0:
            return float(dist[right].sum())
        rates, exits = T.absorbing(self.ctmc.rates, ~left | right)
        unif = T.Uniformized(rates, exits, self.config.uniformization)
        out = T.transient_series(unif, dist, t, stats=self._unif_stats)
        return float(T.clamp_negative(out)[right].sum())


def check(ctmc: Ctmc, formula: Union[str, A.CslFormula], config: CheckConfig = CheckConfig(),
          all_states: bool = False) -> CheckResult:
    return ModelChecker(ctmc, config).check(formula, all_states)
