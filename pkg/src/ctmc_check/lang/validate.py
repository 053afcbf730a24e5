"""Static checks on a parsed model and constant resolution."""

from __future__ import annotations

from fractions import Fraction
from typing import Mapping, Optional

from ..errors import ValidationError
from . import ast as A
from .expr import Value, evaluate


def _raise(message: str, node, reason: str):
    pos = getattr(node, "pos", None) or (None, None)
    raise ValidationError(message, pos[0], pos[1], reason=reason)


def infer_type(expr: A.Expr, types: Mapping[str, str]) -> str:
    """Static type of ``expr``: 'int', 'double' or 'bool'."""
    if isinstance(expr, A.Num):
        return "int" if expr.value.denominator == 1 else "double"
    if isinstance(expr, A.Bool):
        return "bool"
    if isinstance(expr, A.Ident):
        if expr.name not in types:
            _raise(f"unknown identifier {expr.name!r}", expr, "unknown-identifier")
        return types[expr.name]
    if isinstance(expr, A.Unary):
        inner = infer_type(expr.operand, types)
        if expr.op == "!":
            if inner != "bool":
                _raise("'!' needs a boolean operand", expr, "type")
            return "bool"
        if inner == "bool":
            _raise("'-' needs a numeric operand", expr, "type")
        return inner
    left = infer_type(expr.left, types)
    right = infer_type(expr.right, types)
    if expr.op in A.LOGIC_OPS:
        if left != "bool" or right != "bool":
            _raise(f"'{expr.op}' needs boolean operands", expr, "type")
        return "bool"
    if expr.op in ("=", "!="):
        if (left == "bool") != (right == "bool"):
            _raise(f"'{expr.op}' compares a boolean with a number", expr, "type")
        return "bool"
    if left == "bool" or right == "bool":
        _raise(f"'{expr.op}' needs numeric operands", expr, "type")
    if expr.op in A.COMPARE_OPS:
        return "bool"
    return "int" if left == right == "int" else "double"


def _coerce(value, ctype: str, node) -> Value:
    if ctype == "bool":
        if isinstance(value, str):
            if value.lower() not in ("true", "false"):
                _raise(f"constant {node.name!r} needs a boolean value", node, "type")
            return value.lower() == "true"
        if not isinstance(value, bool):
            _raise(f"constant {node.name!r} needs a boolean value", node, "type")
        return value
    if isinstance(value, bool):
        _raise(f"constant {node.name!r} needs a numeric value", node, "type")
    value = Fraction(value)
    if ctype == "int" and value.denominator != 1:
        _raise(f"constant {node.name!r} is declared int but has value {value}", node, "type")
    return value


def resolve_constants(model: A.ModelAst, overrides: Optional[Mapping[str, object]] = None,
                      require_all: bool = True) -> dict[str, Value]:
    """Evaluate constant definitions in order.

    ``overrides`` supplies or replaces values (e.g. from a rate file).
    Unresolved constants raise unless ``require_all`` is false, in which
    case they are simply left out of the result.
    """
    overrides = dict(overrides or {})
    declared = {c.name for c in model.constants}
    for name in overrides:
        if name not in declared:
            raise ValidationError(f"value supplied for undeclared constant {name!r}",
                                  reason="unknown-identifier")
    env: dict[str, Value] = {}
    for c in model.constants:
        if c.name in overrides:
            env[c.name] = _coerce(overrides[c.name], c.type, c)
            continue
        if c.value is None:
            if require_all:
                _raise(f"constant {c.name!r} has no value", c, "undefined-constant")
            continue
        free = A.identifiers(c.value) - set(env)
        if free:
            if require_all or free - declared:
                missing = sorted(free)[0]
                _raise(f"constant {c.name!r} depends on unresolved {missing!r}", c,
                       "undefined-constant" if missing in declared else "unknown-identifier")
            continue
        env[c.name] = _coerce(evaluate(c.value, env), c.type, c)
    return env


def validate_model(model: A.ModelAst, overrides: Optional[Mapping[str, object]] = None,
                   require_all: bool = False) -> dict[str, Value]:
    """Run the static checks; returns the constants that could be resolved."""
    const_names: set[str] = set()
    for c in model.constants:
        if c.name in const_names:
            _raise(f"duplicate constant {c.name!r}", c, "duplicate")
        const_names.add(c.name)
    module_names: set[str] = set()
    var_owner: dict[str, str] = {}
    for m in model.modules:
        if m.name in module_names:
            _raise(f"duplicate module {m.name!r}", m, "duplicate")
        if m.name in const_names:
            _raise(f"module {m.name!r} clashes with a constant", m, "duplicate")
        module_names.add(m.name)
        if not m.variables:
            _raise(f"module {m.name!r} declares no variable", m, "no-variable")
        for v in m.variables:
            if v.name in var_owner or v.name in const_names:
                _raise(f"duplicate name {v.name!r}", v, "duplicate")
            var_owner[v.name] = m.name
    reward_names: set[str] = set()
    for r in model.rewards:
        if r.name in reward_names:
            _raise(f"duplicate reward structure {r.name!r}", r, "duplicate")
        reward_names.add(r.name)

    env = resolve_constants(model, overrides, require_all=require_all)
    types: dict[str, str] = {c.name: c.type for c in model.constants}
    const_types = dict(types)
    for name in var_owner:
        types[name] = "int"

    def const_int(expr, what, node):
        if A.identifiers(expr) - const_names:
            _raise(f"{what} must be a constant expression", node, "non-constant")
        if infer_type(expr, const_types) != "int":
            _raise(f"{what} must be an integer", node, "type")
        if A.identifiers(expr) - set(env):
            return None
        return evaluate(expr, env)

    for m in model.modules:
        for v in m.variables:
            low = const_int(v.low, "range bound", v)
            high = const_int(v.high, "range bound", v)
            if low is not None and high is not None and low > high:
                _raise(f"empty range for {v.name!r}: {low}..{high}", v, "range")
            if v.init is not None:
                init = const_int(v.init, "initial value", v)
                if None not in (init, low, high) and not low <= init <= high:
                    _raise(f"initial value {init} of {v.name!r} outside {low}..{high}",
                           v, "init-range")
        for cmd in m.commands:
            if infer_type(cmd.guard, types) != "bool":
                _raise("guard must be boolean", cmd, "type")
            if cmd.rate is None:
                if cmd.action is None:
                    _raise("unlabeled command needs an explicit rate", cmd, "missing-rate")
            else:
                rate_node = cmd.rate if getattr(cmd.rate, "pos", None) else cmd
                if A.identifiers(cmd.rate) - const_names:
                    _raise("rate must depend on constants only", rate_node, "non-constant")
                if infer_type(cmd.rate, const_types) == "bool":
                    _raise("rate must be numeric", rate_node, "type")
                if not A.identifiers(cmd.rate) - set(env):
                    if evaluate(cmd.rate, env) <= 0:
                        _raise("rate must be strictly positive", rate_node, "non-positive-rate")
            seen: set[str] = set()
            for u in cmd.updates:
                owner = var_owner.get(u.var)
                if owner is None:
                    _raise(f"update of unknown variable {u.var!r}", u, "unknown-identifier")
                if owner != m.name:
                    _raise(f"module {m.name!r} updates variable {u.var!r} owned by {owner!r}",
                           u, "foreign-update")
                if u.var in seen:
                    _raise(f"variable {u.var!r} updated twice", u, "duplicate")
                seen.add(u.var)
                if infer_type(u.value, types) != "int":
                    _raise(f"update of {u.var!r} must be an integer expression", u, "type")

    for r in model.rewards:
        for item in (*r.state_items, *r.trans_items):
            if infer_type(item.guard, types) != "bool":
                _raise("reward guard must be boolean", item, "type")
            if infer_type(item.value, types) == "bool":
                _raise("reward value must be numeric", item, "type")
            if not A.identifiers(item.value) - set(env):
                if evaluate(item.value, env) < 0:
                    _raise("reward value must be non-negative", item, "negative-reward")
    return env
