from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse as sp

from ctmc_check.compose import Ctmc, Variable, build_state_space
from ctmc_check.harness import model_path
from ctmc_check.lang import load_model, load_rates, parse_model


# -- shared models --------------------------------------------------------------------

TWO_STATE = """
ctmc
module M
  s : [0..1] init 0;
  [] s=0 -> 1 : (s'=1);
endmodule
rewards "one"
  true : 1;
endrewards
rewards "flip"
  [] s=0 : 2;
endrewards
"""

BIRTH_DEATH = """
ctmc
const double lam = 1;
const double mu = 2;
module Q
  n : [0..2] init 0;
  [] n<2 -> lam : (n'=n+1);
  [] n>0 -> mu : (n'=n-1);
endmodule
rewards "len"
  true : n;
endrewards
"""


@pytest.fixture(scope="session")
def two_state() -> Ctmc:
    return build_state_space(parse_model(TWO_STATE), name="two")


@pytest.fixture(scope="session")
def birth_death() -> Ctmc:
    return build_state_space(parse_model(BIRTH_DEATH), name="bd")


@pytest.fixture(scope="session")
def pdgf_model():
    return load_model(model_path("pdgf.gcm"))


@pytest.fixture(scope="session")
def pdgf_rates():
    return load_rates(model_path("pdgf.rates"))


@pytest.fixture(scope="session")
def pdgf(pdgf_model, pdgf_rates) -> Ctmc:
    return build_state_space(pdgf_model, pdgf_rates, name="WildType")


def chain_from_matrix(R: np.ndarray, init: int = 0, name: str = "m") -> Ctmc:
    """A Ctmc wrapping an explicit rate matrix (diagonal ignored)."""
    R = np.array(R, dtype=float)
    np.fill_diagonal(R, 0.0)
    n = R.shape[0]
    rates = sp.csr_matrix(R)
    return Ctmc(
        variables=(Variable("s", 0, n - 1, init, "M"),),
        states=np.arange(n, dtype=np.int64).reshape(n, 1),
        init_index=init,
        rates=rates,
        exit_rates=np.asarray(rates.sum(axis=1)).ravel(),
        state_rewards={},
        trans_rewards={},
        constants={},
        name=name,
    )


def random_rate_matrix(rng: np.random.Generator, n: int, density: float = 0.3,
                       scale: float = 3.0) -> np.ndarray:
    R = rng.random((n, n)) * scale * (rng.random((n, n)) < density)
    np.fill_diagonal(R, 0.0)
    # a ring keeps every state reachable from state 0
    for i in range(n - 1):
        if R[i, i + 1] == 0:
            R[i, i + 1] = rng.random() + 0.1
    return R


# -- random guarded-command systems with an independent semantics ---------------------

@dataclass
class GAtom:
    var: str
    op: str
    value: int

    def holds(self, s: dict) -> bool:
        v = s[self.var]
        return {"=": v == self.value, "!=": v != self.value, "<": v < self.value,
                "<=": v <= self.value, ">": v > self.value, ">=": v >= self.value}[self.op]

    def text(self) -> str:
        return f"{self.var}{self.op}{self.value}"


@dataclass
class GUpdate:
    var: str
    delta: int | None = None   # x' = x + delta
    value: int | None = None   # x' = value

    def apply(self, s: dict) -> int:
        return s[self.var] + self.delta if self.delta is not None else self.value

    def text(self) -> str:
        if self.delta is not None:
            sign = "+" if self.delta >= 0 else "-"
            return f"({self.var}'={self.var}{sign}{abs(self.delta)})"
        return f"({self.var}'={self.value})"


@dataclass
class GCommand:
    action: str | None
    guard: list[GAtom]
    rate: Fraction | None
    updates: list[GUpdate]

    def text(self) -> str:
        guard = " & ".join(a.text() for a in self.guard) or "true"
        rate = f"{float(self.rate)!r} : " if self.rate is not None else ""
        ups = " & ".join(u.text() for u in self.updates) or "true"
        return f"[{self.action or ''}] {guard} -> {rate}{ups};"


@dataclass
class GModule:
    name: str
    variables: dict[str, tuple[int, int, int]]  # name -> (low, high, init)
    commands: list[GCommand] = field(default_factory=list)


@dataclass
class GSystem:
    modules: list[GModule]

    def text(self) -> str:
        out = ["ctmc"]
        for m in self.modules:
            out.append(f"module {m.name}")
            for v, (lo, hi, init) in m.variables.items():
                out.append(f"  {v} : [{lo}..{hi}] init {init};")
            out += ["  " + c.text() for c in m.commands]
            out.append("endmodule")
        return "\n".join(out) + "\n"

    @property
    def var_order(self) -> list[str]:
        return [v for m in self.modules for v in m.variables]

    def init(self) -> tuple:
        return tuple(init for m in self.modules for (_, _, init) in m.variables.values())

    def firings(self, state: tuple) -> list[tuple[tuple, Fraction]]:
        """(target, rate) per enabled transition, in source order: an
        unlabeled command where it appears, a label's cartesian product of
        commands at the label's first appearance. Self-loops included."""
        names = self.var_order
        s = dict(zip(names, state))
        out = []
        emitted = set()
        for m in self.modules:
            for c in m.commands:
                if c.action is None:
                    if all(a.holds(s) for a in c.guard):
                        t = dict(s)
                        for u in c.updates:
                            t[u.var] = u.apply(s)
                        out.append((tuple(t[n] for n in names), c.rate))
                    continue
                if c.action in emitted:
                    continue
                emitted.add(c.action)
                combos = [(dict(s), Fraction(1))]
                for m2 in self.modules:
                    cmds = [c2 for c2 in m2.commands if c2.action == c.action]
                    if not cmds:
                        continue
                    new = []
                    for t, r in combos:
                        for c2 in cmds:
                            if all(a.holds(s) for a in c2.guard):
                                t2 = dict(t)
                                for u in c2.updates:
                                    t2[u.var] = u.apply(s)
                                new.append((t2, r * (c2.rate if c2.rate is not None else 1)))
                    combos = new
                out += [(tuple(t[n] for n in names), r) for t, r in combos]
        return out

    def explore(self) -> tuple[list[tuple], dict[tuple[tuple, tuple], Fraction]]:
        """FIFO breadth-first reachability; edges carry summed rates."""
        init = self.init()
        seen = {init}
        order = [init]
        edges: dict = {}
        i = 0
        while i < len(order):
            s = order[i]
            i += 1
            for t, r in self.firings(s):
                if t == s:
                    continue
                edges[(s, t)] = edges.get((s, t), Fraction(0)) + r
                if t not in seen:
                    seen.add(t)
                    order.append(t)
        return order, edges


def random_system(rng: random.Random, n_modules: int | None = None) -> GSystem:
    """2-3 modules of small counters; dyadic rates so float sums are exact."""
    n_modules = n_modules or rng.choice([2, 3])
    labels = ["a", "b", "c"][: rng.randint(1, 3)]
    modules = []
    all_vars = []
    for i in range(n_modules):
        variables = {}
        for j in range(rng.randint(1, 2)):
            hi = rng.randint(1, 3)
            variables[f"x{i}{j}"] = (0, hi, rng.randint(0, hi))
        modules.append(GModule(f"M{i}", variables))
        all_vars += [(v, lo, hi) for v, (lo, hi, _) in variables.items()]
    ranges = {v: (lo, hi) for v, lo, hi in all_vars}

    def dyadic():
        return Fraction(rng.randint(1, 16), 8)

    for m in modules:
        own = list(m.variables)
        for _ in range(rng.randint(1, 4)):
            v = rng.choice(own)
            lo, hi = ranges[v]
            guard = []
            kind = rng.random()
            if kind < 0.4:
                guard.append(GAtom(v, "<", hi))
                ups = [GUpdate(v, delta=1)]
            elif kind < 0.8:
                guard.append(GAtom(v, ">", lo))
                ups = [GUpdate(v, delta=-1)]
            else:
                ups = [GUpdate(v, value=rng.randint(lo, hi))]
            if rng.random() < 0.5:
                other, olo, ohi = rng.choice(all_vars)
                guard.append(GAtom(other, rng.choice(["=", "!=", "<=", ">="]),
                                   rng.randint(olo, ohi)))
            action = rng.choice(labels) if rng.random() < 0.5 else None
            rate = dyadic() if action is None or rng.random() < 0.7 else None
            m.commands.append(GCommand(action, guard, rate, ups))
    return GSystem(modules)


# -- acceptance report ------------------------------------------------------------------

_ACCEPTANCE: list[str] = []


def record_acceptance(line: str) -> None:
    print(line)
    _ACCEPTANCE.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
