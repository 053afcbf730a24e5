"""Tokenizer shared by the model and property parsers."""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import LexError

KEYWORDS = frozenset({
    "ctmc", "const", "int", "double", "bool", "module", "endmodule",
    "init", "rewards", "endrewards", "true", "false",
})

# Longest operators first.
_SYMBOLS = [
    "->", "..", "<=", ">=", "!=", "=?",
    "[", "]", "(", ")", "{", "}", ";", ":", ",", "'", "=", "<", ">",
    "&", "|", "!", "+", "-", "*",
]

_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r\f]+)"
    r"|(?P<nl>\n)"
    r"|(?P<annot>//@reaction[ \t]+(?P<rid>[A-Za-z0-9_.-]+)[^\n]*)"
    r"|(?P<comment>//[^\n]*)"
    r"|(?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r'|(?P<string>"[^"\n]*")'
    r"|(?P<sym>" + "|".join(re.escape(s) for s in _SYMBOLS) + ")"
)


@dataclass(frozen=True)
class Token:
    kind: str  # ident, keyword, number, string, sym, annot, eof
    text: str
    line: int
    col: int

    @property
    def pos(self) -> tuple[int, int]:
        return (self.line, self.col)


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, line_start, i = 1, 0, 0
    n = len(text)
    while i < n:
        m = _TOKEN_RE.match(text, i)
        col = i - line_start + 1
        if m is None:
            raise LexError(f"unexpected character {text[i]!r}", line, col)
        kind = m.lastgroup
        if kind == "rid":
            kind = "annot"
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "annot":
            tokens.append(Token("annot", m.group("rid"), line, col))
        elif kind == "ident":
            word = m.group()
            tokens.append(Token("keyword" if word in KEYWORDS else "ident", word, line, col))
        elif kind == "string":
            tokens.append(Token("string", m.group()[1:-1], line, col))
        elif kind in ("number", "sym"):
            tokens.append(Token(kind, m.group(), line, col))
        i = m.end()
    tokens.append(Token("eof", "", line, i - line_start + 1))
    return tokens
