"""Recursive-descent parsers for ``.gcm`` models and CSL properties."""

from __future__ import annotations

from fractions import Fraction
from typing import Optional

from ..errors import ModelError, ParseError, ValidationError
from . import ast as A
from .lexer import Token, tokenize

_CMP = frozenset(A.COMPARE_OPS)
_BOUND_OPS = frozenset({"<", "<=", ">", ">=", "=?"})
_INTERVAL_START = frozenset({"[", "<=", ">="})


class _Parser:
    def __init__(self, text: str):
        tokens = tokenize(text)
        self.tokens: list[Token] = []
        # index of the real token following each reaction annotation
        self.annots: dict[int, list[Token]] = {}
        for tok in tokens:
            if tok.kind == "annot":
                self.annots.setdefault(len(self.tokens), []).append(tok)
            else:
                self.tokens.append(tok)
        self.i = 0
        self.reward_refs: list[tuple[str, Token]] = []
        self.ident_refs: list[Token] = []

    # -- token helpers ----------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def at(self, text: str, kind: Optional[str] = None) -> bool:
        tok = self.tok
        if kind is not None and tok.kind != kind:
            return False
        return tok.text == text and tok.kind in ("sym", "keyword", "ident")

    def accept(self, text: str) -> Optional[Token]:
        if self.at(text):
            return self.advance()
        return None

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"expected {text!r}")
        return self.advance()

    def expect_ident(self) -> Token:
        if self.tok.kind != "ident":
            self.error("expected identifier")
        return self.advance()

    def error(self, message: str, tok: Optional[Token] = None):
        tok = tok or self.tok
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise ParseError(f"{message}, found {found}", tok.line, tok.col)

    def number(self) -> tuple[Fraction, Token]:
        tok = self.tok
        if tok.kind != "number":
            self.error("expected number")
        self.advance()
        return Fraction(tok.text), tok

    # -- expressions ------------------------------------------------------

    def expr(self) -> A.Expr:
        left = self.and_expr()
        while self.at("|", "sym"):
            tok = self.advance()
            left = A.Binary("|", left, self.and_expr(), left.pos or tok.pos)
        return left

    def and_expr(self) -> A.Expr:
        left = self.not_expr()
        while self.at("&", "sym"):
            tok = self.advance()
            left = A.Binary("&", left, self.not_expr(), left.pos or tok.pos)
        return left

    def not_expr(self) -> A.Expr:
        if self.at("!", "sym"):
            tok = self.advance()
            return A.Unary("!", self.not_expr(), tok.pos)
        return self.cmp_expr()

    def cmp_expr(self) -> A.Expr:
        left = self.add_expr()
        if self.tok.kind == "sym" and self.tok.text in _CMP:
            tok = self.advance()
            left = A.Binary(tok.text, left, self.add_expr(), left.pos or tok.pos)
        return left

    def add_expr(self) -> A.Expr:
        left = self.mul_expr()
        while self.tok.kind == "sym" and self.tok.text in ("+", "-"):
            tok = self.advance()
            left = A.Binary(tok.text, left, self.mul_expr(), left.pos or tok.pos)
        return left

    def mul_expr(self) -> A.Expr:
        left = self.unary_expr()
        while self.at("*", "sym"):
            tok = self.advance()
            left = A.Binary("*", left, self.unary_expr(), left.pos or tok.pos)
        return left

    def unary_expr(self) -> A.Expr:
        if self.at("-", "sym"):
            tok = self.advance()
            return A.Unary("-", self.unary_expr(), tok.pos)
        return self.primary()

    def primary(self) -> A.Expr:
        tok = self.tok
        if tok.kind == "number":
            self.advance()
            return A.Num(Fraction(tok.text), tok.pos)
        if tok.kind == "keyword" and tok.text in ("true", "false"):
            self.advance()
            return A.Bool(tok.text == "true", tok.pos)
        if tok.kind == "ident":
            self.advance()
            self.ident_refs.append(tok)
            return A.Ident(tok.text, tok.pos)
        if self.at("(", "sym"):
            self.advance()
            inner = self.expr()
            self.expect(")")
            return inner
        self.error("expected expression")

    # -- models -----------------------------------------------------------

    def model(self) -> A.ModelAst:
        constants, modules, rewards = [], [], []
        self.accept("ctmc")
        while self.tok.kind != "eof":
            if self.at("const", "keyword"):
                constants.append(self.const_def())
            elif self.at("module", "keyword"):
                modules.append(self.module())
            elif self.at("rewards", "keyword"):
                rewards.append(self.reward_block())
            else:
                self.error("expected 'const', 'module' or 'rewards'")
        return A.ModelAst(tuple(constants), tuple(modules), tuple(rewards))

    def const_def(self) -> A.ConstDef:
        start = self.expect("const")
        ctype = "int"
        if self.tok.kind == "keyword" and self.tok.text in ("int", "double", "bool"):
            ctype = self.advance().text
        name = self.expect_ident().text
        value = None
        if self.accept("="):
            value = self.expr()
        self.expect(";")
        return A.ConstDef(name, ctype, value, start.pos)

    def module(self) -> A.ModuleDef:
        start = self.expect("module")
        name = self.expect_ident().text
        variables, commands = [], []
        while not self.at("endmodule", "keyword"):
            if self.tok.kind == "ident" and self.peek().text == ":":
                variables.append(self.var_decl())
            elif self.at("[", "sym"):
                commands.append(self.command())
            else:
                self.error("expected variable declaration, command or 'endmodule'")
        self.advance()
        return A.ModuleDef(name, tuple(variables), tuple(commands), start.pos)

    def var_decl(self) -> A.VarDecl:
        tok = self.expect_ident()
        self.expect(":")
        self.expect("[")
        low = self.expr()
        self.expect("..")
        high = self.expr()
        self.expect("]")
        init = None
        if self.accept("init"):
            init = self.expr()
        self.expect(";")
        return A.VarDecl(tok.text, low, high, init, tok.pos)

    def _reaction_for(self, start: int, end: int) -> Optional[str]:
        """Reaction id annotating the command spanning tokens [start, end]."""
        end_tok = self.tokens[end]
        for annot in self.annots.get(end + 1, []):
            if annot.line == end_tok.line:
                self.annots[end + 1].remove(annot)
                return annot.text
        start_tok = self.tokens[start]
        pending = [a for a in self.annots.get(start, []) if a.line < start_tok.line]
        if pending:
            return pending[-1].text
        return None

    def command(self) -> A.Command:
        start_i = self.i
        start = self.expect("[")
        action = None
        if self.tok.kind == "ident":
            action = self.advance().text
        self.expect("]")
        guard = self.expr()
        self.expect("->")
        rate = None
        if not self._at_updates():
            rate = self.expr()
            self.expect(":")
        updates = self.updates()
        end_i = self.i
        self.expect(";")
        reaction = self._reaction_for(start_i, end_i)
        return A.Command(action, guard, rate, tuple(updates), reaction, start.pos)

    def _at_updates(self) -> bool:
        if self.at("true", "keyword") and self.peek().text == ";":
            return True
        return (self.at("(", "sym") and self.peek().kind == "ident"
                and self.peek(2).text == "'")

    def updates(self) -> list[A.Update]:
        if self.at("true", "keyword"):
            self.advance()
            return []
        out = [self.update()]
        while self.accept("&"):
            out.append(self.update())
        return out

    def update(self) -> A.Update:
        self.expect("(")
        tok = self.expect_ident()
        self.expect("'")
        self.expect("=")
        value = self.expr()
        self.expect(")")
        return A.Update(tok.text, value, tok.pos)

    def reward_block(self) -> A.RewardBlock:
        start = self.expect("rewards")
        if self.tok.kind != "string":
            self.error("expected quoted reward name")
        name = self.advance().text
        state_items, trans_items = [], []
        while not self.at("endrewards", "keyword"):
            item_tok = self.tok
            if self.accept("["):
                action = None
                if self.tok.kind == "ident":
                    action = self.advance().text
                self.expect("]")
                guard = self.expr()
                self.expect(":")
                value = self.expr()
                self.expect(";")
                trans_items.append(A.TransReward(action, guard, value, item_tok.pos))
            else:
                guard = self.expr()
                self.expect(":")
                value = self.expr()
                self.expect(";")
                state_items.append(A.StateReward(guard, value, item_tok.pos))
        self.advance()
        return A.RewardBlock(name, tuple(state_items), tuple(trans_items), start.pos)

    # -- properties -------------------------------------------------------

    def formula(self) -> A.StateFormula:
        left = self.and_formula()
        while self.at("|", "sym"):
            tok = self.advance()
            left = A.OrF(left, self.and_formula(), tok.pos)
        return left

    def and_formula(self) -> A.StateFormula:
        left = self.not_formula()
        while self.at("&", "sym"):
            tok = self.advance()
            left = A.AndF(left, self.not_formula(), tok.pos)
        return left

    def not_formula(self) -> A.StateFormula:
        if self.at("!", "sym"):
            tok = self.advance()
            return A.NotF(self.not_formula(), tok.pos)
        return self.primary_formula()

    def _at_operator(self, name: str) -> bool:
        if not self.at(name, "ident"):
            return False
        nxt = self.peek()
        if name == "R":
            return nxt.text == "{" or nxt.text in _BOUND_OPS
        return nxt.kind == "sym" and nxt.text in _BOUND_OPS

    def primary_formula(self) -> A.StateFormula:
        tok = self.tok
        if self._at_operator("P"):
            self.advance()
            bound = self.bound(probability=True)
            self.expect("[")
            path = self.path()
            self.expect("]")
            return A.ProbOp(bound, path, tok.pos)
        if self._at_operator("S"):
            self.advance()
            bound = self.bound(probability=True)
            self.expect("[")
            inner = self.formula()
            self.expect("]")
            return A.SteadyOp(bound, inner, tok.pos)
        if self._at_operator("R"):
            self.advance()
            self.expect("{")
            if self.tok.kind != "string":
                self.error("expected quoted reward name")
            name_tok = self.advance()
            self.expect("}")
            bound = self.bound(probability=False)
            self.expect("[")
            kind = self.reward_kind()
            self.expect("]")
            self.reward_refs.append((name_tok.text, name_tok))
            return A.RewardOp(name_tok.text, bound, kind, tok.pos)
        if tok.kind == "keyword" and tok.text in ("true", "false") and not self._cmp_follows(1):
            self.advance()
            return A.TrueF(tok.pos) if tok.text == "true" else A.FalseF(tok.pos)
        if self.at("(", "sym"):
            saved = self.i
            try:
                self.advance()
                inner = self.formula()
                self.expect(")")
                if not (self.tok.kind == "sym" and self.tok.text in _CMP | {"+", "-", "*"}):
                    return inner
            except ParseError:
                pass
            self.i = saved
        expr = self.cmp_expr()
        return A.Atom(expr, getattr(expr, "pos", None))

    def _cmp_follows(self, k: int) -> bool:
        nxt = self.peek(k)
        return nxt.kind == "sym" and nxt.text in _CMP | {"+", "-", "*"}

    def bound(self, probability: bool) -> A.Bound:
        tok = self.tok
        if tok.kind != "sym" or tok.text not in _BOUND_OPS:
            self.error("expected comparison or '=?'")
        self.advance()
        if tok.text == "=?":
            return A.QUERY
        value, vtok = self.number()
        if probability and not (0 <= value <= 1):
            raise ValidationError(f"probability bound {vtok.text} outside [0,1]",
                                  vtok.line, vtok.col, reason="bound")
        return A.Bound(tok.text, value)

    def interval(self) -> A.Interval:
        tok = self.tok
        if self.accept("<="):
            high, _ = self.number()
            return A.Interval(Fraction(0), high)
        if self.accept(">="):
            low, _ = self.number()
            return A.Interval(low, None)
        if self.accept("["):
            low, _ = self.number()
            self.expect(",")
            high, _ = self.number()
            self.expect("]")
            if high < low:
                raise ValidationError(f"reversed time interval [{low},{high}]",
                                      tok.line, tok.col, reason="interval")
            return A.Interval(low, high)
        return A.Interval()

    def path(self) -> A.PathFormula:
        tok = self.tok
        if self.at("F", "ident") and (self.peek().text in _INTERVAL_START
                                      or not self._cmp_follows(1)):
            self.advance()
            interval = self.interval()
            return A.Eventually(self.formula(), interval, tok.pos)
        left = self.formula()
        if not self.at("U", "ident"):
            self.error("expected 'U' or 'F' path operator")
        self.advance()
        interval = self.interval()
        right = self.formula()
        return A.Until(left, right, interval, tok.pos)

    def reward_kind(self) -> A.RewardKind:
        if self.at("I", "ident") and self.peek().text == "=":
            self.advance()
            self.advance()
            t, _ = self.number()
            return A.InstantReward(t)
        if self.at("C", "ident") and self.peek().text == "<=":
            self.advance()
            self.advance()
            t, _ = self.number()
            return A.CumulativeReward(t)
        if self.at("F", "ident"):
            self.advance()
            return A.ReachReward(self.formula())
        if self.at("S", "ident") and self.peek().text == "]":
            self.advance()
            return A.SteadyReward()
        self.error("expected reward kind 'I=t', 'C<=t', 'F phi' or 'S'")


def parse_expression(text: str) -> A.Expr:
    p = _Parser(text)
    expr = p.expr()
    if p.tok.kind != "eof":
        p.error("unexpected trailing input")
    return expr


def parse_model(text: str, validate: bool = True) -> A.ModelAst:
    """Parse model source text.

    With ``validate`` the structural checks run immediately; constants
    without a value are tolerated until the model is built.
    """
    p = _Parser(text)
    model = p.model()
    if validate:
        from .validate import validate_model
        validate_model(model)
    return model


def parse_property(text: str, model: Optional[A.ModelAst] = None) -> A.CslFormula:
    """Parse one CSL/reward property.

    If ``model`` is supplied every ``R{"name"}`` is checked against its
    reward blocks and every identifier against its variables and constants.
    """
    p = _Parser(text)
    formula = p.formula()
    if p.tok.kind != "eof":
        p.error("unexpected trailing input")
    if model is not None:
        names = {r.name for r in model.rewards}
        for name, tok in p.reward_refs:
            if name not in names:
                raise ValidationError(f"unknown reward structure {name!r}", tok.line, tok.col,
                                      reason="reward")
        known = {v.name for v in model.variables} | {c.name for c in model.constants}
        for tok in p.ident_refs:
            if tok.text not in known:
                raise ValidationError(f"unknown identifier {tok.text!r}", tok.line, tok.col,
                                      reason="unknown-identifier")
    return formula


def parse_properties(text: str, model: Optional[A.ModelAst] = None) -> list[A.CslFormula]:
    """Parse a property file: one formula per line, ``#`` starts a comment."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            out.append(parse_property(line, model))
        except ValidationError as exc:
            raise ValidationError(exc.message, lineno, exc.col, reason=exc.reason) from None
        except ModelError as exc:
            raise type(exc)(exc.message, lineno, exc.col) from None
    return out
