"""Recursive-descent parser for raw formula strings.

Grammar (lowest to highest binding)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := ("-" | "+") unary | power
    power   := primary (("^" | "**") unary)?
    primary := NUMBER | NAME | NAME "(" expr ")" | "(" expr ")"

``^`` and ``**`` are interchangeable; power is right-associative and binds
tighter than unary minus, so ``-2^2`` is ``-(2^2)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .ast import FUNCTIONS, Binary, Constant, ExprNode, Unary, Variable


class FormulaError(ValueError):
    """Base class for formula parsing problems."""


class FormulaSyntaxError(FormulaError):
    def __init__(self, message: str, text: str, offset: int):
        self.text = text
        self.offset = offset
        super().__init__(f"{message} at offset {offset} in {text!r}")


class UnknownFunctionError(FormulaError):
    def __init__(self, name: str, text: str, offset: int):
        self.name = name
        self.text = text
        self.offset = offset
        super().__init__(
            f"unknown function {name!r} at offset {offset} in {text!r}; "
            f"supported: {', '.join(FUNCTIONS)}"
        )


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\*\*|[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def _error(self, message: str) -> FormulaSyntaxError:
        return FormulaSyntaxError(message, self.text, self.tok.offset)

    def _accept(self, *ops: str) -> _Token | None:
        if self.tok.kind == "op" and self.tok.text in ops:
            tok = self.tok
            self.i += 1
            return tok
        return None

    def _expect(self, op: str) -> None:
        if self._accept(op) is None:
            found = self.tok.text or "end of input"
            raise self._error(f"expected {op!r}, found {found!r}")

    def parse(self) -> ExprNode:
        node = self.expr()
        if self.tok.kind != "end":
            raise self._error(f"unexpected {self.tok.text!r}")
        return node

    def expr(self) -> ExprNode:
        node = self.term()
        while (tok := self._accept("+", "-")) is not None:
            node = Binary("add" if tok.text == "+" else "sub", node, self.term())
        return node

    def term(self) -> ExprNode:
        node = self.unary()
        while (tok := self._accept("*", "/")) is not None:
            node = Binary("mul" if tok.text == "*" else "div", node, self.unary())
        return node

    def unary(self) -> ExprNode:
        if self._accept("-") is not None:
            return Unary("neg", self.unary())
        if self._accept("+") is not None:
            return self.unary()
        return self.power()

    def power(self) -> ExprNode:
        base = self.primary()
        if self._accept("^", "**") is not None:
            return Binary("pow", base, self.unary())
        return base

    def primary(self) -> ExprNode:
        tok = self.tok
        if tok.kind == "number":
            self.i += 1
            return Constant(float(tok.text))
        if tok.kind == "name":
            self.i += 1
            if self._accept("(") is not None:
                if tok.text not in FUNCTIONS:
                    raise UnknownFunctionError(tok.text, self.text, tok.offset)
                arg = self.expr()
                self._expect(")")
                return Unary(tok.text, arg)
            return Variable(tok.text)
        if self._accept("(") is not None:
            node = self.expr()
            self._expect(")")
            return node
        found = tok.text or "end of input"
        raise self._error(f"expected a number, name or '(', found {found!r}")


def parse_formula(text: str) -> ExprNode:
    """Parse a raw formula string such as ``"(qa - 1)/kappa"`` into a tree."""
    if not text or not text.strip():
        raise FormulaSyntaxError("empty formula", text, 0)
    return _Parser(text).parse()
