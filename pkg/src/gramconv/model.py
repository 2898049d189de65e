"""BGF grammar data model.

A grammar is a list of root nonterminals plus an ordered list of
productions ``p(label, lhs, rhs)``.  Right-hand sides are trees built
from the expression algebra below.  All values are immutable; grammar
rewrites always build new values.

Names like ``int`` and ``str`` are ordinary nonterminals that simply
have no defining production.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterator, NamedTuple


class GrammarError(ValueError):
    """Malformed grammar value (violated structural invariant)."""


# ---------------------------------------------------------------------------
# Expressions

class Expr:
    """Base class of right-hand-side expressions."""

    __slots__ = ()


@dataclass(frozen=True)
class Epsilon(Expr):
    """The empty word."""


@dataclass(frozen=True)
class Empty(Expr):
    """Failure: matches nothing at all."""


@dataclass(frozen=True)
class Terminal(Expr):
    text: str

    def __post_init__(self):
        if not self.text:
            raise GrammarError("terminal text must be nonempty")


@dataclass(frozen=True)
class Nonterminal(Expr):
    name: str

    def __post_init__(self):
        if not self.name:
            raise GrammarError("nonterminal name must be nonempty")


@dataclass(frozen=True)
class Sequence(Expr):
    parts: tuple[Expr, ...]

    def __post_init__(self):
        if len(self.parts) < 2:
            raise GrammarError("sequence needs at least 2 parts")


@dataclass(frozen=True)
class Choice(Expr):
    alts: tuple[Expr, ...]

    def __post_init__(self):
        if len(self.alts) < 2:
            raise GrammarError("choice needs at least 2 alternatives")


@dataclass(frozen=True)
class Star(Expr):
    inner: Expr


@dataclass(frozen=True)
class Plus(Expr):
    inner: Expr


@dataclass(frozen=True)
class Opt(Expr):
    inner: Expr


@dataclass(frozen=True)
class Selector(Expr):
    """A named subexpression, e.g. ``sel('lhs', expr)``.

    Selectors may nest directly (``sel('argument', sel('a', str))``
    occurs in extracted object-model grammars), so no flatness check.
    """

    name: str
    inner: Expr

    def __post_init__(self):
        if not self.name:
            raise GrammarError("selector name must be nonempty")


@dataclass(frozen=True)
class SepPlus(Expr):
    """One-or-more list of ``item`` separated by ``separator``."""

    item: Expr
    separator: Expr


EPSILON = Epsilon()
EMPTY = Empty()


def seq(*parts: Expr) -> Expr:
    return Sequence(tuple(parts))


def choice(*alts: Expr) -> Expr:
    return Choice(tuple(alts))


def nt(name: str) -> Nonterminal:
    return Nonterminal(name)


def term(text: str) -> Terminal:
    return Terminal(text)


def children(e: Expr) -> tuple[Expr, ...]:
    """Immediate subexpressions of ``e``, in order."""
    if isinstance(e, Sequence):
        return e.parts
    if isinstance(e, Choice):
        return e.alts
    if isinstance(e, (Star, Plus, Opt)):
        return (e.inner,)
    if isinstance(e, Selector):
        return (e.inner,)
    if isinstance(e, SepPlus):
        return (e.item, e.separator)
    return ()


def with_children(e: Expr, parts: tuple[Expr, ...]) -> Expr:
    """Rebuild ``e`` with new immediate subexpressions."""
    if isinstance(e, Sequence):
        return Sequence(parts)
    if isinstance(e, Choice):
        return Choice(parts)
    if isinstance(e, Star):
        return Star(parts[0])
    if isinstance(e, Plus):
        return Plus(parts[0])
    if isinstance(e, Opt):
        return Opt(parts[0])
    if isinstance(e, Selector):
        return Selector(e.name, parts[0])
    if isinstance(e, SepPlus):
        return SepPlus(parts[0], parts[1])
    if children(e):
        raise GrammarError(f"cannot rebuild {e!r}")
    return e


def walk(e: Expr) -> Iterator[Expr]:
    """Pre-order traversal of the expression tree."""
    yield e
    for c in children(e):
        yield from walk(c)


def expr_nonterminals(e: Expr) -> Iterator[str]:
    for node in walk(e):
        if isinstance(node, Nonterminal):
            yield node.name


def rename_expr(e: Expr, old: str, new: str) -> Expr:
    if isinstance(e, Nonterminal):
        return Nonterminal(new) if e.name == old else e
    kids = children(e)
    if not kids:
        return e
    return with_children(e, tuple(rename_expr(c, old, new) for c in kids))


def replace_expr(e: Expr, target: Expr, replacement: Expr) -> tuple[Expr, int]:
    """Replace every occurrence of ``target`` in ``e``; returns (result, count)."""
    if e == target:
        return replacement, 1
    kids = children(e)
    if not kids:
        return e, 0
    total = 0
    rebuilt = []
    for c in kids:
        r, n = replace_expr(c, target, replacement)
        rebuilt.append(r)
        total += n
    if total == 0:
        return e, 0
    return with_children(e, tuple(rebuilt)), total


# ---------------------------------------------------------------------------
# Productions and grammars

@dataclass(frozen=True)
class Production:
    """One production rule ``p(label, lhs, rhs)``; label may be empty."""

    label: str
    lhs: str
    rhs: Expr

    def __post_init__(self):
        if not self.lhs:
            raise GrammarError("production lhs must be nonempty")


def p(label: str, lhs: str, rhs: Expr) -> Production:
    return Production(label, lhs, rhs)


@dataclass(frozen=True)
class Grammar:
    roots: tuple[str, ...] = ()
    productions: tuple[Production, ...] = ()

    def __post_init__(self):
        labelled = [(q.lhs, q.label) for q in self.productions if q.label]
        dupes = [k for k, n in Counter(labelled).items() if n > 1]
        if dupes:
            raise GrammarError(f"duplicate labelled productions: {dupes}")

    def productions_of(self, name: str) -> tuple[Production, ...]:
        return tuple(q for q in self.productions if q.lhs == name)

    def with_productions(self, productions) -> "Grammar":
        return Grammar(self.roots, tuple(productions))

    def with_roots(self, roots) -> "Grammar":
        return Grammar(tuple(roots), self.productions)


class Usage(NamedTuple):
    defined: frozenset[str]
    used: frozenset[str]
    top: frozenset[str]


def usage(g: Grammar) -> Usage:
    """Defined lhs names, names used in any rhs, and defined-but-unused names."""
    defined = frozenset(q.lhs for q in g.productions)
    used = frozenset(n for q in g.productions for n in expr_nonterminals(q.rhs))
    return Usage(defined, used, defined - used)


def all_names(g: Grammar) -> frozenset[str]:
    u = usage(g)
    return u.defined | u.used | frozenset(g.roots)


def canonical_eq(a: Grammar, b: Grammar) -> bool:
    """Order-insensitive equality: roots as sets, productions as multisets."""
    return (set(a.roots) == set(b.roots)
            and Counter(a.productions) == Counter(b.productions))


def first_definition_order(g: Grammar, names) -> list[str]:
    """Filter g's lhs names down to ``names``, keeping first-definition order."""
    wanted = set(names)
    out: list[str] = []
    for q in g.productions:
        if q.lhs in wanted and q.lhs not in out:
            out.append(q.lhs)
    return out


def reachable(g: Grammar, start: str) -> frozenset[str]:
    """All nonterminal names reachable from ``start`` through production rhs."""
    defs: dict[str, list[Production]] = {}
    for q in g.productions:
        defs.setdefault(q.lhs, []).append(q)
    seen = {start}
    todo = [start]
    while todo:
        name = todo.pop()
        for q in defs.get(name, ()):
            for used_name in expr_nonterminals(q.rhs):
                if used_name not in seen:
                    seen.add(used_name)
                    todo.append(used_name)
    return frozenset(seen)
