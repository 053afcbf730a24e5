"""Immutable syntax trees for models and properties.

Source positions are carried on nodes but excluded from equality, so a
tree parsed from pretty-printed text compares equal to the original.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

Pos = Optional[tuple[int, int]]


def _pos():
    return field(default=None, compare=False, repr=False)


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: Fraction
    pos: Pos = _pos()


@dataclass(frozen=True)
class Bool:
    value: bool
    pos: Pos = _pos()


@dataclass(frozen=True)
class Ident:
    name: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class Unary:
    op: str  # '-' or '!'
    operand: "Expr"
    pos: Pos = _pos()


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"
    pos: Pos = _pos()


Expr = Union[Num, Bool, Ident, Unary, Binary]

ARITH_OPS = ("+", "-", "*")
COMPARE_OPS = ("=", "!=", "<", "<=", ">", ">=")
LOGIC_OPS = ("&", "|")


def identifiers(expr: Expr) -> set[str]:
    """Names referenced anywhere in ``expr``."""
    if isinstance(expr, Ident):
        return {expr.name}
    if isinstance(expr, Unary):
        return identifiers(expr.operand)
    if isinstance(expr, Binary):
        return identifiers(expr.left) | identifiers(expr.right)
    return set()


def conjunction(parts: list[Expr]) -> Expr:
    if not parts:
        return Bool(True)
    out = parts[0]
    for p in parts[1:]:
        out = Binary("&", out, p)
    return out


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstDef:
    name: str
    type: str  # 'int', 'double' or 'bool'
    value: Optional[Expr]  # None: must be supplied externally
    pos: Pos = _pos()


@dataclass(frozen=True)
class VarDecl:
    name: str
    low: Expr
    high: Expr
    init: Optional[Expr] = None
    pos: Pos = _pos()


@dataclass(frozen=True)
class Update:
    var: str
    value: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class Command:
    action: Optional[str]
    guard: Expr
    rate: Optional[Expr]
    updates: tuple[Update, ...]
    reaction: Optional[str] = None
    pos: Pos = _pos()


@dataclass(frozen=True)
class ModuleDef:
    name: str
    variables: tuple[VarDecl, ...]
    commands: tuple[Command, ...]
    pos: Pos = _pos()


@dataclass(frozen=True)
class StateReward:
    guard: Expr
    value: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class TransReward:
    action: Optional[str]  # None matches unlabeled commands
    guard: Expr
    value: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class RewardBlock:
    name: str
    state_items: tuple[StateReward, ...] = ()
    trans_items: tuple[TransReward, ...] = ()
    pos: Pos = _pos()


@dataclass(frozen=True)
class ModelAst:
    constants: tuple[ConstDef, ...] = ()
    modules: tuple[ModuleDef, ...] = ()
    rewards: tuple[RewardBlock, ...] = ()

    def module(self, name: str) -> ModuleDef:
        for m in self.modules:
            if m.name == name:
                return m
        raise KeyError(name)

    def reward(self, name: str) -> RewardBlock:
        for r in self.rewards:
            if r.name == name:
                return r
        raise KeyError(name)

    @property
    def variables(self) -> list[VarDecl]:
        return [v for m in self.modules for v in m.variables]

    @property
    def actions(self) -> list[str]:
        """Action labels in order of first appearance."""
        seen: dict[str, None] = {}
        for m in self.modules:
            for c in m.commands:
                if c.action is not None:
                    seen.setdefault(c.action)
        return list(seen)


# ---------------------------------------------------------------------------
# Properties
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrueF:
    pos: Pos = _pos()


@dataclass(frozen=True)
class FalseF:
    pos: Pos = _pos()


@dataclass(frozen=True)
class Atom:
    expr: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class NotF:
    operand: "StateFormula"
    pos: Pos = _pos()


@dataclass(frozen=True)
class AndF:
    left: "StateFormula"
    right: "StateFormula"
    pos: Pos = _pos()


@dataclass(frozen=True)
class OrF:
    left: "StateFormula"
    right: "StateFormula"
    pos: Pos = _pos()


@dataclass(frozen=True)
class Interval:
    """Time interval ``[low, high]``; ``high=None`` means unbounded."""

    low: Fraction = Fraction(0)
    high: Optional[Fraction] = None

    @property
    def is_point(self) -> bool:
        return self.high is not None and self.low == self.high

    @property
    def is_unbounded(self) -> bool:
        return self.low == 0 and self.high is None


@dataclass(frozen=True)
class Until:
    left: "StateFormula"
    right: "StateFormula"
    interval: Interval = Interval()
    pos: Pos = _pos()


@dataclass(frozen=True)
class Eventually:
    target: "StateFormula"
    interval: Interval = Interval()
    pos: Pos = _pos()

    def as_until(self) -> Until:
        return Until(TrueF(), self.target, self.interval, self.pos)


PathFormula = Union[Until, Eventually]


@dataclass(frozen=True)
class Bound:
    """Comparison against a threshold; ``op='=?'`` marks a quantitative query."""

    op: str
    value: Optional[Fraction] = None

    @property
    def is_query(self) -> bool:
        return self.op == "=?"


QUERY = Bound("=?")


@dataclass(frozen=True)
class ProbOp:
    bound: Bound
    path: PathFormula
    pos: Pos = _pos()


@dataclass(frozen=True)
class SteadyOp:
    bound: Bound
    formula: "StateFormula"
    pos: Pos = _pos()


@dataclass(frozen=True)
class InstantReward:
    time: Fraction


@dataclass(frozen=True)
class CumulativeReward:
    time: Fraction


@dataclass(frozen=True)
class ReachReward:
    target: "StateFormula"


@dataclass(frozen=True)
class SteadyReward:
    pass


RewardKind = Union[InstantReward, CumulativeReward, ReachReward, SteadyReward]


@dataclass(frozen=True)
class RewardOp:
    reward: str
    bound: Bound
    kind: RewardKind
    pos: Pos = _pos()


StateFormula = Union[TrueF, FalseF, Atom, NotF, AndF, OrF, ProbOp, SteadyOp, RewardOp]
CslFormula = StateFormula
