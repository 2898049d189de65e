"""Text format for BGF grammars.

    roots: program ;
    program : function+ ;
    [binary] expr : expr ops expr ;
    ops : "==" | "+" | "-" ;
    lst : {item ","}+ ;         # one-or-more items separated by ","

Terminals are double-quoted, nonterminals are bare identifiers,
juxtaposition builds a sequence, ``|`` a choice (lowest precedence),
postfix ``* + ?`` iterate, ``name::item`` attaches a selector, ``eps``
and ``phi`` are the empty word and failure, parentheses group, and
``#`` starts a line comment.

Operator binding, tightest first: postfix, selector, sequence, choice.
So ``a::b*`` is ``sel(a, *(b))`` while ``(a::b)*`` is ``*(sel(a, b))``.
"""

from __future__ import annotations

import re
from typing import NamedTuple

from .model import (
    EMPTY, EPSILON, Choice, Empty, Epsilon, Expr, Grammar, Nonterminal, Opt,
    Plus, Production, Selector, SepPlus, Sequence, Star, Terminal,
)


class BgfSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column


class Token(NamedTuple):
    kind: str
    value: str
    line: int
    column: int


IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_\-]*")
NUMBER_RE = re.compile(r"[0-9]+")
# "," and numbers never occur in grammar files; the script format uses them.
PUNCT = ("::", ":", ";", "|", "*", "+", "?", "(", ")", "[", "]", "{", "}", ",")


def _tokenize(text: str) -> list[Token]:
    tokens = []
    line, col = 1, 1
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch == '"':
            start_line, start_col = line, col
            i += 1
            col += 1
            buf = []
            while i < n and text[i] != '"':
                c = text[i]
                if c == "\\" and i + 1 < n:
                    esc = text[i + 1]
                    buf.append({"n": "\n", "t": "\t"}.get(esc, esc))
                    i += 2
                    col += 2
                    continue
                if c == "\n":
                    raise BgfSyntaxError("unterminated terminal", start_line, start_col)
                buf.append(c)
                i += 1
                col += 1
            if i >= n:
                raise BgfSyntaxError("unterminated terminal", start_line, start_col)
            i += 1
            col += 1
            tokens.append(Token("terminal", "".join(buf), start_line, start_col))
            continue
        m = IDENT_RE.match(text, i)
        if m:
            tokens.append(Token("ident", m.group(), line, col))
            col += len(m.group())
            i = m.end()
            continue
        m = NUMBER_RE.match(text, i)
        if m:
            tokens.append(Token("number", m.group(), line, col))
            col += len(m.group())
            i = m.end()
            continue
        for punct in PUNCT:
            if text.startswith(punct, i):
                tokens.append(Token(punct, punct, line, col))
                i += len(punct)
                col += len(punct)
                break
        else:
            raise BgfSyntaxError(f"unexpected character {ch!r}", line, col)
    tokens.append(Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            self.fail(f"expected {kind!r}, found {tok.value or tok.kind!r}")
        return self.advance()

    def fail(self, message: str):
        tok = self.peek()
        raise BgfSyntaxError(message, tok.line, tok.column)

    # grammar ::= header production*
    def parse_grammar(self) -> Grammar:
        roots = self.parse_header()
        productions = []
        while self.peek().kind != "eof":
            productions.append(self.parse_production())
        return Grammar(tuple(roots), tuple(productions))

    def parse_header(self) -> list[str]:
        tok = self.expect("ident")
        if tok.value != "roots":
            self.fail("grammar must start with a 'roots:' header")
        self.expect(":")
        roots = []
        while self.peek().kind == "ident":
            roots.append(self.advance().value)
        self.expect(";")
        return roots

    # production ::= ('[' ident ']')? ident ':' choice ';'
    def parse_production(self) -> Production:
        label = ""
        if self.peek().kind == "[":
            self.advance()
            label = self.expect("ident").value
            self.expect("]")
        lhs = self.expect("ident").value
        self.expect(":")
        rhs = self.parse_choice()
        self.expect(";")
        return Production(label, lhs, rhs)

    def parse_choice(self) -> Expr:
        alts = [self.parse_sequence()]
        while self.peek().kind == "|":
            self.advance()
            alts.append(self.parse_sequence())
        return alts[0] if len(alts) == 1 else Choice(tuple(alts))

    _SEQ_STARTERS = {"ident", "terminal", "(", "{"}

    def parse_sequence(self) -> Expr:
        parts = [self.parse_selected()]
        while self.peek().kind in self._SEQ_STARTERS:
            parts.append(self.parse_selected())
        return parts[0] if len(parts) == 1 else Sequence(tuple(parts))

    # selected ::= postfix ('::' selected)?   -- but only idents may select
    def parse_selected(self) -> Expr:
        if self.peek().kind == "ident" and self.tokens[self.pos + 1].kind == "::":
            name = self.advance().value
            self.advance()
            return Selector(name, self.parse_selected())
        return self.parse_postfix()

    def parse_postfix(self) -> Expr:
        e = self.parse_primary()
        while self.peek().kind in ("*", "+", "?"):
            op = self.advance().kind
            e = {"*": Star, "+": Plus, "?": Opt}[op](e)
        return e

    def parse_primary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "terminal":
            self.advance()
            if not tok.value:
                self.fail("terminal text must be nonempty")
            return Terminal(tok.value)
        if tok.kind == "ident":
            self.advance()
            if tok.value == "eps":
                return EPSILON
            if tok.value == "phi":
                return EMPTY
            return Nonterminal(tok.value)
        if tok.kind == "(":
            self.advance()
            e = self.parse_choice()
            self.expect(")")
            return e
        if tok.kind == "{":
            self.advance()
            item = self.parse_selected()
            separator = self.parse_selected()
            self.expect("}")
            self.expect("+")
            return SepPlus(item, separator)
        self.fail(f"expected an expression, found {tok.value or tok.kind!r}")


def parse_bgf(text: str) -> Grammar:
    """Parse the BGF text format; raises BgfSyntaxError with position info."""
    return _Parser(_tokenize(text)).parse_grammar()


def parse_expr(text: str) -> Expr:
    """Parse a single rhs expression (used by the script format)."""
    parser = _Parser(_tokenize(text))
    e = parser.parse_choice()
    parser.expect("eof")
    return e


# ---------------------------------------------------------------------------
# Serialization

def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


# Precedence levels, loosest to tightest.
_CHOICE, _SEQ, _SEL, _POST = 0, 1, 2, 3


def _fmt(e: Expr, level: int) -> str:
    if isinstance(e, Epsilon):
        return "eps"
    if isinstance(e, Empty):
        return "phi"
    if isinstance(e, Terminal):
        return _quote(e.text)
    if isinstance(e, Nonterminal):
        return e.name
    if isinstance(e, Choice):
        body = " | ".join(_fmt(a, _SEQ) for a in e.alts)
        return f"({body})" if level > _CHOICE else body
    if isinstance(e, Sequence):
        body = " ".join(_fmt(x, _SEL) for x in e.parts)
        return f"({body})" if level > _SEQ else body
    if isinstance(e, Selector):
        body = f"{e.name}::{_fmt(e.inner, _SEL)}"
        return f"({body})" if level > _SEL else body
    if isinstance(e, (Star, Plus, Opt)):
        mark = {Star: "*", Plus: "+", Opt: "?"}[type(e)]
        return _fmt(e.inner, _POST + 1) + mark
    if isinstance(e, SepPlus):
        return "{" + _fmt(e.item, _SEL) + " " + _fmt(e.separator, _SEL) + "}+"
    raise TypeError(f"unknown expression {e!r}")


def serialize_expr(e: Expr) -> str:
    return _fmt(e, _CHOICE)


def serialize_production(q: Production) -> str:
    label = f"[{q.label}] " if q.label else ""
    return f"{label}{q.lhs} : {serialize_expr(q.rhs)} ;"


def serialize_bgf(g: Grammar) -> str:
    lines = ["roots: " + " ".join(g.roots) + " ;" if g.roots else "roots: ;"]
    lines.extend(serialize_production(q) for q in g.productions)
    return "\n".join(lines) + "\n"
