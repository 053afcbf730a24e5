"""Canonical text rendering of models and formulas."""

from __future__ import annotations

from fractions import Fraction
from typing import Union

from . import ast as A

_PREC = {"|": 1, "&": 2, "!": 3, "+": 5, "-": 5, "*": 6}
for _op in A.COMPARE_OPS:
    _PREC[_op] = 4
_ATOM = 8


def format_number(value: Fraction) -> str:
    """Exact decimal rendering; only terminating decimals are accepted."""
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    den = value.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        raise ValueError(f"{value} has no finite decimal expansion")
    digits = max(twos, fives)
    scaled = abs(value.numerator * 10**digits // value.denominator)
    text = str(scaled).rjust(digits + 1, "0")
    sign = "-" if value < 0 else ""
    return f"{sign}{text[:-digits]}.{text[-digits:]}"


def _expr(e: A.Expr) -> tuple[str, int]:
    if isinstance(e, A.Num):
        text = format_number(e.value)
        return text, (_ATOM if e.value >= 0 else 7)
    if isinstance(e, A.Bool):
        return ("true" if e.value else "false"), _ATOM
    if isinstance(e, A.Ident):
        return e.name, _ATOM
    if isinstance(e, A.Unary):
        if e.op == "!":
            return "!" + _wrap(e.operand, 3), 3
        return "-" + _wrap(e.operand, 7), 7
    prec = _PREC[e.op]
    if e.op in A.COMPARE_OPS:
        left, right = _wrap(e.left, 5), _wrap(e.right, 5)
        return f"{left}{e.op}{right}", prec
    left, right = _wrap(e.left, prec), _wrap(e.right, prec + 1)
    return f"{left} {e.op} {right}", prec


def _wrap(e: A.Expr, need: int) -> str:
    text, prec = _expr(e)
    return text if prec >= need else f"({text})"


def format_expr(e: A.Expr) -> str:
    return _expr(e)[0]


def _interval(iv: A.Interval) -> str:
    if iv.high is None:
        return "" if iv.low == 0 else f">={format_number(iv.low)}"
    if iv.low == 0:
        return f"<={format_number(iv.high)}"
    return f"[{format_number(iv.low)},{format_number(iv.high)}]"


def _bound(b: A.Bound) -> str:
    return "=?" if b.is_query else f"{b.op}{format_number(b.value)}"


def _formula(f) -> tuple[str, int]:
    if isinstance(f, A.TrueF):
        return "true", 4
    if isinstance(f, A.FalseF):
        return "false", 4
    if isinstance(f, A.Atom):
        # boolean connectives inside an atom read the same as formula connectives
        e = f.expr
        if isinstance(e, A.Unary) and e.op == "!":
            return _formula(A.NotF(A.Atom(e.operand)))
        if isinstance(e, A.Binary) and e.op in ("&", "|"):
            node = A.AndF if e.op == "&" else A.OrF
            return _formula(node(A.Atom(e.left), A.Atom(e.right)))
        return _wrap(e, 4), 4
    if isinstance(f, A.NotF):
        return "!" + _fwrap(f.operand, 3), 3
    if isinstance(f, A.AndF):
        return f"{_fwrap(f.left, 2)} & {_fwrap(f.right, 3)}", 2
    if isinstance(f, A.OrF):
        return f"{_fwrap(f.left, 1)} | {_fwrap(f.right, 2)}", 1
    if isinstance(f, A.ProbOp):
        return f"P{_bound(f.bound)} [ {_path(f.path)} ]", 4
    if isinstance(f, A.SteadyOp):
        return f"S{_bound(f.bound)} [ {format_formula(f.formula)} ]", 4
    if isinstance(f, A.RewardOp):
        return f'R{{"{f.reward}"}}{_bound(f.bound)} [ {_reward_kind(f.kind)} ]', 4
    raise TypeError(f"not a formula: {f!r}")


def _fwrap(f, need: int) -> str:
    text, prec = _formula(f)
    return text if prec >= need else f"({text})"


def _operand(f) -> str:
    # a leading sign after F/U would read as subtraction from the operator keyword
    text = _fwrap(f, 4)
    return f"({text})" if text.startswith("-") else text


def _path(p: A.PathFormula) -> str:
    if isinstance(p, A.Eventually):
        return f"F{_interval(p.interval)} {_operand(p.target)}"
    # operands of U are parsed at full formula level; parenthesize for readability
    return f"{_operand(p.left)} U{_interval(p.interval)} {_operand(p.right)}"


def _reward_kind(k: A.RewardKind) -> str:
    if isinstance(k, A.InstantReward):
        return f"I={format_number(k.time)}"
    if isinstance(k, A.CumulativeReward):
        return f"C<={format_number(k.time)}"
    if isinstance(k, A.ReachReward):
        return f"F {_operand(k.target)}"
    return "S"


def format_formula(f: A.CslFormula) -> str:
    return _formula(f)[0]


def _command(c: A.Command) -> str:
    updates = " & ".join(f"({u.var}'={format_expr(u.value)})" for u in c.updates) or "true"
    rate = f"{format_expr(c.rate)} : " if c.rate is not None else ""
    text = f"[{c.action or ''}] {format_expr(c.guard)} -> {rate}{updates};"
    if c.reaction is not None:
        text += f" //@reaction {c.reaction}"
    return text


def format_model(model: A.ModelAst) -> str:
    lines = ["ctmc", ""]
    for c in model.constants:
        value = f" = {format_expr(c.value)}" if c.value is not None else ""
        lines.append(f"const {c.type} {c.name}{value};")
    if model.constants:
        lines.append("")
    for m in model.modules:
        lines.append(f"module {m.name}")
        for v in m.variables:
            init = f" init {format_expr(v.init)}" if v.init is not None else ""
            lines.append(f"    {v.name} : [{format_expr(v.low)}..{format_expr(v.high)}]{init};")
        if m.commands:
            lines.append("")
        for c in m.commands:
            lines.append("    " + _command(c))
        lines.append("endmodule")
        lines.append("")
    for r in model.rewards:
        lines.append(f'rewards "{r.name}"')
        for s in r.state_items:
            lines.append(f"    {format_expr(s.guard)} : {format_expr(s.value)};")
        for t in r.trans_items:
            lines.append(f"    [{t.action or ''}] {format_expr(t.guard)} : {format_expr(t.value)};")
        lines.append("endrewards")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def pretty_print(node: Union[A.ModelAst, A.CslFormula, A.Expr]) -> str:
    if isinstance(node, A.ModelAst):
        return format_model(node)
    if isinstance(node, (A.Num, A.Bool, A.Ident, A.Unary, A.Binary)):
        return format_expr(node)
    return format_formula(node)
