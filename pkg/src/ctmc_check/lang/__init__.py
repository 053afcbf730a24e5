"""Modeling and property languages: lexing, parsing, validation, printing."""

from __future__ import annotations

import re
from fractions import Fraction
from pathlib import Path

from ..errors import ParseError
from . import ast
from .ast import CslFormula, ModelAst
from .expr import compile_vectorized, evaluate, substitute
from .parser import parse_expression, parse_model, parse_properties, parse_property
from .printer import format_expr, format_formula, format_model, format_number, pretty_print
from .validate import resolve_constants, validate_model

__all__ = [
    "ast", "CslFormula", "ModelAst", "compile_vectorized", "evaluate", "substitute",
    "parse_expression", "parse_model", "parse_properties", "parse_property",
    "format_expr", "format_formula", "format_model", "format_number", "pretty_print",
    "resolve_constants", "validate_model", "parse_rates", "load_model", "load_rates",
]

_RATE_LINE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*([^\s;]+)\s*;?\s*$")


def parse_rates(text: str) -> dict[str, object]:
    """Parse a rate file: ``name = value`` per line, ``//`` or ``#`` comments.

    Numeric values are kept exact as ``Fraction``; ``true``/``false`` are
    accepted for boolean constants.
    """
    rates: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = re.split(r"//|#", raw, maxsplit=1)[0]
        if not line.strip():
            continue
        m = _RATE_LINE.match(line)
        if m is None:
            raise ParseError("expected 'name = value'", lineno, 1)
        name, value = m.groups()
        if value in ("true", "false"):
            rates[name] = value == "true"
        else:
            try:
                rates[name] = Fraction(value)
            except ValueError:
                raise ParseError(f"bad numeric value {value!r}", lineno, m.start(2) + 1) from None
    return rates


def load_rates(path) -> dict[str, object]:
    return parse_rates(Path(path).read_text(encoding="utf-8"))


def load_model(path) -> ModelAst:
    return parse_model(Path(path).read_text(encoding="utf-8"))
