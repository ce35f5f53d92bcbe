r"""Translate a LaTeX math subset into raw formula strings.

Translation is textual: the LaTeX is tokenized, rewritten into the raw
formula syntax, and the result is handed to :func:`parse_formula`.

Name mapping rules (see ``docs/latex.md`` for the full table):

* Greek commands are spelled out: ``\eta`` -> ``eta``, ``\Phi`` -> ``Phi``.
* Every single letter is its own symbol, so ``ab`` means ``a*b``;
  juxtaposed operands multiply.
* Subscripts and letter-only superscripts are labels appended to the base
  name after one underscore: ``\sigma_t^{qa}`` -> ``sigma_qa``,
  ``w_t^{ia}`` -> ``w_ia``, ``\sigma_{x,1}`` -> ``sigma_x1``.  A subscript
  piece equal to ``t`` is dropped.
* A superscript containing digits, operators or parentheses is a power:
  ``\eta^2``, ``\xi^{(\psi-1)/\psi}``.  ``e^{...}`` becomes ``exp(...)``.
* Accents append a suffix: ``\hat{e}`` -> ``e_hat``, ``\bar{v}`` -> ``v_bar``,
  ``\underline{a}`` -> ``a_under``, ``\tilde{x}`` -> ``x_tilde``.
* ``\frac{\partial^2 v}{\partial x \partial y}`` -> ``v_yx`` (the innermost
  derivative comes first in the name), ``\frac{\partial q}{\partial \eta}``
  -> ``q_eta``, ``\frac{\partial^2 q}{\partial \eta^2}`` -> ``q_etaeta``.
* ``\mathrm{name}`` and ``\text{name}`` give a multi-letter identifier.

Entries in ``name_map`` rename the default names (``{"q_a": "qa"}``).
"""

from __future__ import annotations

import re
from collections.abc import Mapping
from dataclasses import dataclass

from .ast import ExprNode
from .parser import FormulaError, parse_formula


class LatexError(FormulaError):
    def __init__(self, message: str, text: str, offset: int | None = None):
        self.text = text
        self.offset = offset
        where = f" at offset {offset}" if offset is not None else ""
        super().__init__(f"{message}{where} in {text!r}")


GREEK = frozenset(
    """alpha beta gamma delta epsilon varepsilon zeta eta theta vartheta iota
    kappa lambda mu nu xi pi varpi rho varrho sigma varsigma tau upsilon phi
    varphi chi psi omega Gamma Delta Theta Lambda Xi Pi Sigma Upsilon Phi Psi
    Omega""".split()
)
FUNCTION_COMMANDS = {
    "log": "log",
    "ln": "log",
    "exp": "exp",
    "sin": "sin",
    "cos": "cos",
    "tanh": "tanh",
}
ACCENTS = {
    "hat": "hat",
    "widehat": "hat",
    "bar": "bar",
    "overline": "bar",
    "tilde": "tilde",
    "widetilde": "tilde",
    "underline": "under",
}
_FRAC = {"frac", "dfrac", "tfrac"}
_TIMES = {"cdot", "times"}
_SPACING = {",", ";", ":", "!", " ", "quad", "qquad"}
_SIZING = {"left", "right", "big", "Big", "bigg", "Bigg", "bigl", "bigr", "Bigl", "Bigr", "biggl", "biggr"}
_OPEN = {"(": ")", "[": "]", r"\{": r"\}"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<cmd>\\(?:[A-Za-z]+|[,;:!{}\ ]))
  | (?P<number>\d+(?:\.\d+)?|\.\d+)
  | (?P<letter>[A-Za-z])
  | (?P<sym>[-+*/()\[\]{}^_=,|'])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> list[_Tok]:
    out = []
    pos = 0
    depth = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise LatexError(f"unsupported character {text[pos]!r}", text, pos)
        if m.lastgroup != "ws":
            tok = _Tok(m.lastgroup, m.group(), pos)
            if tok.kind == "cmd" and tok.text[1:] in _SPACING:
                pos = m.end()
                continue
            if tok.text == "{":
                depth += 1
            elif tok.text == "}":
                depth -= 1
                if depth < 0:
                    raise LatexError("unbalanced braces: unexpected '}'", text, pos)
            out.append(tok)
        pos = m.end()
    if depth != 0:
        raise LatexError("unbalanced braces: missing '}'", text)
    out.append(_Tok("end", "", len(text)))
    return out


class _Normalizer:
    def __init__(self, text: str, name_map: Mapping[str, str]):
        self.text = text
        self.name_map = name_map
        self.toks = _tokenize(text)
        self.i = 0

    # -- token helpers ---------------------------------------------------
    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def _next(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def _error(self, message: str, tok: _Tok | None = None) -> LatexError:
        tok = tok or self.tok
        return LatexError(message, self.text, tok.offset)

    def _cmd(self, tok: _Tok | None = None) -> str | None:
        tok = tok or self.tok
        return tok.text[1:] if tok.kind == "cmd" else None

    def _is(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind != "end"

    def _expect(self, text: str) -> None:
        if not self._is(text):
            found = self.tok.text or "end of input"
            raise self._error(f"expected {text!r}, found {found!r}")
        self.i += 1

    def _skip_sizing(self) -> None:
        while self._cmd() in _SIZING:
            self.i += 1

    def _opening(self) -> str | None:
        """Closing delimiter if the cursor sits on an opening one (after sizing)."""
        save = self.i
        self._skip_sizing()
        if self.tok.text in _OPEN:
            return _OPEN[self.tok.text]
        self.i = save
        return None

    def _rename(self, name: str) -> str:
        return self.name_map.get(name, name)

    # -- grammar ---------------------------------------------------------
    def run(self) -> str:
        out = self.sequence(closers=())
        if self.tok.kind != "end":
            raise self._error(f"unexpected {self.tok.text!r}")
        return out

    def sequence(self, closers: tuple[str, ...]) -> str:
        parts: list[tuple[str, str]] = []
        while True:
            save = self.i
            self._skip_sizing()
            tok = self.tok
            if tok.kind == "end" or tok.text in closers:
                self.i = save if tok.kind == "end" else self.i
                break
            self.i = save
            cmd = self._cmd()
            if tok.kind == "sym" and tok.text in "+-*/":
                self.i += 1
                parts.append(("op", tok.text))
                continue
            if cmd in _TIMES:
                self.i += 1
                parts.append(("op", "*"))
                continue
            if cmd == "div":
                self.i += 1
                parts.append(("op", "/"))
                continue
            atom = self.atom()
            if parts and parts[-1][0] == "atom":
                parts.append(("op", "*"))
            parts.append(("atom", atom))
        if not parts:
            raise self._error("empty expression")
        return " ".join(text for _, text in parts)

    def group(self) -> str:
        """Contents of a ``{...}`` group, or a single atom."""
        if self._is("{"):
            self.i += 1
            inner = self.sequence(closers=("}",))
            self._expect("}")
            return inner
        return self.atom(allow_power=False)

    def atom(self, allow_power: bool = True) -> str:
        tok = self.tok
        cmd = self._cmd()
        closer = self._opening()
        if closer is not None:
            self.i += 1
            inner = self.sequence(closers=(closer,))
            self._skip_sizing()
            self._expect(closer)
            base = f"({inner})"
        elif tok.text == "{":
            base = f"({self.group()})"
        elif tok.kind == "number":
            self.i += 1
            base = tok.text
        elif tok.kind == "letter" or cmd in GREEK or cmd in ACCENTS or cmd in ("mathrm", "text"):
            name, power = self.identifier()
            if power is not None:
                if not allow_power:
                    raise self._error("nested powers need braces, e.g. x^{y^2}")
                return self._pow(name, power)
            base = name
        elif cmd in _FRAC:
            base = self.frac()
        elif cmd == "sqrt":
            self.i += 1
            if self._is("["):
                raise self._error(r"\sqrt with an index is not supported")
            base = f"sqrt({self.group()})"
        elif cmd in FUNCTION_COMMANDS:
            self.i += 1
            if self._is("^"):
                raise self._error(f"powers of \\{cmd} must be written as (\\{cmd}(x))^n")
            base = f"{FUNCTION_COMMANDS[cmd]}({self.function_argument()})"
        elif cmd == "partial":
            raise self._error(r"\partial is only supported inside \frac{\partial ...}{\partial ...}")
        elif cmd is not None:
            raise self._error(f"unsupported command \\{cmd}")
        else:
            found = tok.text or "end of input"
            raise self._error(f"unexpected {found!r}")
        if allow_power and self._is("^"):
            self.i += 1
            return self._pow(base, self.superscript_power())
        return base

    def _pow(self, base: str, exponent: str) -> str:
        if base == "e":
            return f"exp({exponent})"
        return f"{base}^({exponent})"

    def function_argument(self) -> str:
        closer = self._opening()
        if closer is not None:
            self.i += 1
            inner = self.sequence(closers=(closer,))
            self._skip_sizing()
            self._expect(closer)
            return inner
        if self._is("{"):
            return self.group()
        return self.atom(allow_power=True)

    def superscript_power(self) -> str:
        if self._is("{"):
            return self.group()
        tok = self.tok
        if tok.kind == "number" and len(tok.text) > 1:
            # x^23 is x^2 * 3 in LaTeX
            self.toks[self.i] = _Tok("number", tok.text[1:], tok.offset + 1)
            return tok.text[0]
        return self.atom(allow_power=False)

    # -- identifiers -----------------------------------------------------
    def _label_text(self, closers: tuple[str, ...]) -> list[str]:
        """Comma-separated pieces of a label made of letters, digits and Greek."""
        pieces = [""]
        while True:
            tok = self.tok
            cmd = self._cmd()
            if tok.kind == "end" or tok.text in closers:
                return pieces
            if tok.kind in ("letter", "number"):
                pieces[-1] += tok.text
            elif cmd in GREEK:
                pieces[-1] += cmd
            elif tok.text == ",":
                pieces.append("")
            else:
                raise self._error(f"unsupported token {tok.text!r} in a label")
            self.i += 1

    def _read_label(self) -> list[str]:
        if self._is("{"):
            self.i += 1
            pieces = self._label_text(closers=("}",))
            self._expect("}")
            return pieces
        tok = self._next()
        if tok.kind == "letter":
            return [tok.text]
        if tok.kind == "number":
            if len(tok.text) > 1:
                self.i -= 1
                self.toks[self.i] = _Tok("number", tok.text[1:], tok.offset + 1)
                return [tok.text[0]]
            return [tok.text]
        if self._cmd(tok) in GREEK:
            return [self._cmd(tok)]
        raise self._error(f"unsupported label {tok.text!r}", tok)

    def _superscript_is_label(self) -> bool:
        """A superscript of letters/Greek only is a label, anything else a power."""
        j = self.i + 1
        tok = self.toks[j]
        if tok.text != "{":
            return tok.kind == "letter" or (tok.kind == "cmd" and tok.text[1:] in GREEK)
        j += 1
        seen = False
        while self.toks[j].text != "}":
            t = self.toks[j]
            if not (t.kind == "letter" or (t.kind == "cmd" and t.text[1:] in GREEK)):
                return False
            seen = True
            j += 1
        return seen

    def _base_name(self) -> str:
        tok = self._next()
        cmd = self._cmd(tok)
        if tok.kind == "letter":
            return tok.text
        if cmd in GREEK:
            return cmd
        if cmd in ("mathrm", "text"):
            self._expect("{")
            name = ""
            while not self._is("}"):
                t = self._next()
                if t.kind not in ("letter", "number") and t.text != "_":
                    raise self._error(f"unsupported token {t.text!r} in \\{cmd}", t)
                name += t.text
            self.i += 1
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name):
                raise self._error(f"invalid name {name!r} in \\{cmd}", tok)
            return name
        if cmd in ACCENTS:
            self._expect("{")
            inner, power = self.identifier(rename=False)
            if power is not None:
                raise self._error(f"powers inside \\{cmd} are not supported", tok)
            self._expect("}")
            return f"{inner}_{ACCENTS[cmd]}"
        raise self._error(f"expected an identifier, found {tok.text!r}", tok)

    def identifier(self, rename: bool = True) -> tuple[str, str | None]:
        """Read a symbol with its labels; returns (name, trailing power or None)."""
        base = self._base_name()
        labels: list[str] = []
        power = None
        while True:
            if self._is("_"):
                self.i += 1
                labels += [p for p in self._read_label() if p != "t"]
            elif self._is("^") and self._superscript_is_label():
                self.i += 1
                labels += self._read_label()
            elif self._is("^"):
                self.i += 1
                power = self.superscript_power()
                break
            else:
                break
        label = "".join(labels)
        name = f"{base}_{label}" if label else base
        return (self._rename(name) if rename else name), power

    # -- fractions and derivatives ----------------------------------------
    def frac(self) -> str:
        self.i += 1
        if not self._is("{"):
            raise self._error(r"\frac needs braced arguments")
        if self.toks[self.i + 1].text == r"\partial":
            return self.derivative()
        num = self.group()
        if not self._is("{"):
            raise self._error(r"\frac needs braced arguments")
        den = self.group()
        return f"(({num}) / ({den}))"

    def _partial_order(self) -> int:
        if not self._is("^"):
            return 1
        self.i += 1
        exponent = self.superscript_power()
        if not exponent.isdigit() or int(exponent) < 1:
            raise self._error(f"derivative order must be a positive integer, got {exponent!r}")
        return int(exponent)

    def derivative(self) -> str:
        self._expect("{")
        self._expect(r"\partial")
        order = self._partial_order()
        var, power = self.identifier()
        if power is not None:
            raise self._error("unexpected power on the differentiated variable")
        self._expect("}")
        self._expect("{")
        states: list[str] = []
        while not self._is("}"):
            self._expect(r"\partial")
            state, power = self.identifier()
            count = 1
            if power is not None:
                if not power.isdigit() or int(power) < 1:
                    raise self._error(f"bad derivative power {power!r}")
                count = int(power)
            states += [state] * count
        self.i += 1
        if len(states) != order:
            raise self._error(
                f"derivative order {order} does not match {len(states)} denominator variables"
            )
        # the rightmost denominator variable is differentiated first
        name = f"{var}_{''.join(reversed(states))}"
        return self._rename(name)


def normalize_latex(text: str, name_map: Mapping[str, str] | None = None) -> str:
    """Rewrite a LaTeX formula as a raw formula string."""
    if not text or not text.strip():
        raise LatexError("empty formula", text, 0)
    return _Normalizer(text, name_map or {}).run()


def parse_latex(text: str, name_map: Mapping[str, str] | None = None) -> ExprNode:
    return parse_formula(normalize_latex(text, name_map))
