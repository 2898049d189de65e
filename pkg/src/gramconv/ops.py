"""Bidirectional grammar transformation steps.

Every step kind comes as a forward/backward pair (rename/rename,
project/inject, unchain/chain, ...).  Applying a step with
``apply_step_traced`` returns the transformed grammar together with the
step enriched by an inversion payload; ``invert_step`` turns such an
enriched step into one that undoes it exactly.

Steps address productions by (label, lhs, rhs), never by list position:
grammars compare as multisets, so positions are not stable.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Optional as Opt_  # Opt is the grammar combinator

from .model import (
    EPSILON, EMPTY, Choice, Empty, Epsilon, Expr, Grammar, GrammarError,
    Nonterminal, Opt, Plus, Production, Selector, SepPlus, Sequence, Star,
    Terminal, all_names, children, replace_expr, rename_expr, with_children,
)


class XbgfError(Exception):
    """Base class for transformation failures."""


class TargetNotFound(XbgfError):
    pass


class AmbiguousTarget(XbgfError):
    pass


class PreconditionViolated(XbgfError):
    pass


class NameClash(XbgfError):
    pass


class MissingPayload(XbgfError):
    pass


class ScriptError(XbgfError):
    """A step failed inside a script; carries position and intermediate state."""

    def __init__(self, index: int, step: "Step", grammar: Grammar, cause: Exception):
        super().__init__(f"step {index} ({step_name(step)}) failed: {cause}")
        self.index = index
        self.step = step
        self.grammar = grammar
        self.cause = cause


# ---------------------------------------------------------------------------
# Expression rewriting helpers

def absorb(e: Expr) -> Expr:
    """Normalize away epsilon/failure artifacts left by stripping.

    Sequences drop epsilon parts and collapse when a single part is
    left; a choice of only epsilons collapses to epsilon; a binary
    choice with one epsilon alternative becomes an optional; a
    separator that vanished turns a separated list into a plain plus.
    """
    kids = children(e)
    if kids:
        e = with_children(e, tuple(absorb(c) for c in kids))
    if isinstance(e, Sequence):
        parts = [x for x in e.parts if not isinstance(x, Epsilon)]
        if any(isinstance(x, Empty) for x in parts):
            return EMPTY
        if not parts:
            return EPSILON
        if len(parts) == 1:
            return parts[0]
        return Sequence(tuple(parts))
    if isinstance(e, Choice):
        alts = [a for a in e.alts if not isinstance(a, Empty)]
        if not alts:
            return EMPTY
        if all(isinstance(a, Epsilon) for a in alts):
            return EPSILON
        if any(isinstance(a, Epsilon) for a in alts):
            rest = [a for a in alts if not isinstance(a, Epsilon)]
            if len(e.alts) == 2 and len(rest) == 1:
                return Opt(rest[0])
            raise PreconditionViolated(
                "epsilon alternative in a non-binary choice has no defined reading")
        if len(alts) == 1:
            return alts[0]
        return Choice(tuple(alts))
    if isinstance(e, (Star, Plus)):
        if isinstance(e.inner, Epsilon):
            return EPSILON
        if isinstance(e.inner, Empty):
            return EPSILON if isinstance(e, Star) else EMPTY
    if isinstance(e, Opt) and isinstance(e.inner, (Epsilon, Empty)):
        return EPSILON
    if isinstance(e, SepPlus):
        if isinstance(e.separator, Epsilon):
            return Plus(e.item)
        if isinstance(e.item, Epsilon):
            raise PreconditionViolated("separated list lost its item")
    return e


def strip_selectors(e: Expr) -> Expr:
    if isinstance(e, Selector):
        return strip_selectors(e.inner)
    kids = children(e)
    if not kids:
        return e
    return with_children(e, tuple(strip_selectors(c) for c in kids))


def strip_terminals(e: Expr) -> Expr:
    if isinstance(e, Terminal):
        return EPSILON
    kids = children(e)
    if not kids:
        return e
    return with_children(e, tuple(strip_terminals(c) for c in kids))


def has_selectors(e: Expr) -> bool:
    if isinstance(e, Selector):
        return True
    return any(has_selectors(c) for c in children(e))


def has_terminals(e: Expr) -> bool:
    if isinstance(e, Terminal):
        return True
    return any(has_terminals(c) for c in children(e))


# ---------------------------------------------------------------------------
# Step base machinery

@dataclass(frozen=True)
class Step:
    """One transformation step; concrete kinds below."""

    def apply(self, g: Grammar) -> tuple[Grammar, "Step"]:
        raise NotImplementedError

    def invert(self) -> "Step":
        raise NotImplementedError


@dataclass(frozen=True)
class Script:
    steps: tuple[Step, ...] = ()

    def __add__(self, other: "Script") -> "Script":
        return Script(self.steps + other.steps)

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)


def step_name(s: Step) -> str:
    return type(s).__name__.lower()


def _find(g: Grammar, lhs: str, label: str, rhs: Opt_[Expr] = None) -> int:
    hits = [i for i, q in enumerate(g.productions)
            if q.lhs == lhs and q.label == label and (rhs is None or q.rhs == rhs)]
    if not hits:
        want = Production(label, lhs, rhs) if rhs is not None else f"p({label!r}, {lhs})"
        raise TargetNotFound(f"no production matching {want}")
    if len(hits) > 1:
        raise AmbiguousTarget(f"{len(hits)} productions match p({label!r}, {lhs})")
    return hits[0]


def _replace_at(g: Grammar, index: int, *new: Production) -> Grammar:
    prods = g.productions
    return g.with_productions(prods[:index] + tuple(new) + prods[index + 1:])


def _swap_productions(g: Grammar, pairs) -> Grammar:
    """Replace each ``post`` production by its ``pre`` form (payload replay)."""
    prods = list(g.productions)
    for post, pre in pairs:
        try:
            i = prods.index(post)
        except ValueError:
            raise TargetNotFound(f"expected production {post} not present")
        prods[i] = pre
    return g.with_productions(prods)


# ---------------------------------------------------------------------------
# Renaming and roots

@dataclass(frozen=True)
class RenameN(Step):
    frm: str
    to: str

    def apply(self, g):
        if self.frm == self.to:
            raise PreconditionViolated(f"renaming {self.frm} to itself")
        names = all_names(g)
        if self.frm not in names:
            raise TargetNotFound(f"nonterminal {self.frm} does not occur")
        if self.to in names:
            raise NameClash(f"nonterminal {self.to} already occurs")
        prods = tuple(
            Production(q.label, self.to if q.lhs == self.frm else q.lhs,
                       rename_expr(q.rhs, self.frm, self.to))
            for q in g.productions)
        roots = tuple(self.to if r == self.frm else r for r in g.roots)
        return Grammar(roots, prods), self

    def invert(self):
        return RenameN(self.to, self.frm)


@dataclass(frozen=True)
class Reroot(Step):
    old_roots: tuple[str, ...]
    new_roots: tuple[str, ...]

    def apply(self, g):
        if tuple(g.roots) != tuple(self.old_roots):
            raise PreconditionViolated(
                f"roots are {list(g.roots)}, expected {list(self.old_roots)}")
        return g.with_roots(self.new_roots), self

    def invert(self):
        return Reroot(self.new_roots, self.old_roots)


# ---------------------------------------------------------------------------
# Labels

@dataclass(frozen=True)
class Unlabel(Step):
    lhs: str
    label: str
    payload: Opt_[Production] = field(default=None, compare=False, repr=False)

    def apply(self, g):
        if not self.label:
            raise PreconditionViolated("unlabel needs a nonempty label")
        i = _find(g, self.lhs, self.label)
        q = g.productions[i]
        g2 = _replace_at(g, i, Production("", q.lhs, q.rhs))
        return g2, replace(self, payload=q)

    def invert(self):
        if self.payload is None:
            raise MissingPayload("unlabel was never applied")
        return Designate(self.payload)


@dataclass(frozen=True)
class Designate(Step):
    production: Production

    def apply(self, g):
        if not self.production.label:
            raise PreconditionViolated("designate needs a labelled production")
        for q in g.productions:
            if q.label == self.production.label and q.lhs == self.production.lhs:
                raise NameClash(
                    f"label {self.production.label!r} already used for {q.lhs}")
        i = _find(g, self.production.lhs, "", self.production.rhs)
        g2 = _replace_at(g, i, self.production)
        return g2, self

    def invert(self):
        return Unlabel(self.production.lhs, self.production.label,
                       payload=self.production)


# ---------------------------------------------------------------------------
# Selectors and terminals

@dataclass(frozen=True)
class Anonymize(Step):
    """Strip all selectors from one production; argument is the selectored form."""

    production: Production

    def apply(self, g):
        q = self.production
        if not has_selectors(q.rhs):
            raise PreconditionViolated(f"no selectors in {q}")
        i = _find(g, q.lhs, q.label, q.rhs)
        stripped = absorb(strip_selectors(q.rhs))
        g2 = _replace_at(g, i, Production(q.label, q.lhs, stripped))
        return g2, self

    def invert(self):
        return Deanonymize(self.production)


@dataclass(frozen=True)
class Deanonymize(Step):
    """Re-attach selectors; argument is the selectored form to restore."""

    production: Production

    def apply(self, g):
        q = self.production
        stripped = absorb(strip_selectors(q.rhs))
        i = _find(g, q.lhs, q.label, stripped)
        g2 = _replace_at(g, i, q)
        return g2, self

    def invert(self):
        return Anonymize(self.production)


@dataclass(frozen=True)
class Abstractize(Step):
    """Strip all terminals from one production; argument is the concrete form."""

    production: Production

    def apply(self, g):
        q = self.production
        if not has_terminals(q.rhs):
            raise PreconditionViolated(f"no terminals in {q}")
        i = _find(g, q.lhs, q.label, q.rhs)
        stripped = absorb(strip_terminals(q.rhs))
        g2 = _replace_at(g, i, Production(q.label, q.lhs, stripped))
        return g2, self

    def invert(self):
        return Concretize(self.production)


@dataclass(frozen=True)
class Concretize(Step):
    production: Production

    def apply(self, g):
        q = self.production
        stripped = absorb(strip_terminals(q.rhs))
        i = _find(g, q.lhs, q.label, stripped)
        g2 = _replace_at(g, i, q)
        return g2, self

    def invert(self):
        return Abstractize(self.production)


# ---------------------------------------------------------------------------
# Choice shape

@dataclass(frozen=True)
class Vertical(Step):
    """Split every top-level choice of ``nt`` into separate productions."""

    nt: str
    payload: Opt_[tuple] = field(default=None, compare=False, repr=False)

    def apply(self, g):
        before = g.productions_of(self.nt)
        targets = [q for q in before if isinstance(q.rhs, Choice)]
        if not targets:
            raise PreconditionViolated(f"{self.nt} has no choice production")
        if any(q.label for q in targets):
            raise PreconditionViolated(f"cannot verticalize labelled production of {self.nt}")
        prods: list[Production] = []
        for q in g.productions:
            if q.lhs == self.nt and isinstance(q.rhs, Choice):
                prods.extend(Production("", q.lhs, a) for a in q.rhs.alts)
            else:
                prods.append(q)
        g2 = g.with_productions(prods)
        return g2, replace(self, payload=(before, g2.productions_of(self.nt)))

    def invert(self):
        if self.payload is None:
            raise MissingPayload("vertical was never applied")
        before, after = self.payload
        return Horizontal(self.nt, payload=(after, before))


@dataclass(frozen=True)
class Horizontal(Step):
    """Merge all productions of ``nt`` into one top-level choice."""

    nt: str
    payload: Opt_[tuple] = field(default=None, compare=False, repr=False)

    def apply(self, g):
        mine = g.productions_of(self.nt)
        if len(mine) < 2:
            raise PreconditionViolated(f"{self.nt} has fewer than 2 productions")
        if self.payload is not None:
            # exact replay of a recorded split
            expected, restore = self.payload
            if Counter(mine) != Counter(expected):
                raise PreconditionViolated(f"productions of {self.nt} changed since split")
            return _rebuild_nt(g, self.nt, restore), self
        if any(q.label for q in mine):
            raise PreconditionViolated(f"cannot merge labelled productions of {self.nt}")
        merged = Production("", self.nt, Choice(tuple(q.rhs for q in mine)))
        g2 = _rebuild_nt(g, self.nt, (merged,))
        return g2, replace(self, payload=(mine, (merged,)))

    def invert(self):
        if self.payload is None:
            raise MissingPayload("horizontal was never applied")
        expected, restore = self.payload
        return Vertical(self.nt, payload=(restore, expected))


def _rebuild_nt(g: Grammar, nt: str, new_productions) -> Grammar:
    """Replace all productions of ``nt`` by ``new_productions`` at the same spot."""
    prods = []
    inserted = False
    for q in g.productions:
        if q.lhs == nt:
            if not inserted:
                prods.extend(new_productions)
                inserted = True
        else:
            prods.append(q)
    if not inserted:
        prods.extend(new_productions)
    return g.with_productions(prods)


# ---------------------------------------------------------------------------
# Adding and removing definitions

@dataclass(frozen=True)
class Undefine(Step):
    """Drop all productions of a nonterminal that stays in use."""

    nt: str
    payload: Opt_[tuple] = field(default=None, compare=False, repr=False)

    def apply(self, g):
        mine = g.productions_of(self.nt)
        if not mine:
            raise TargetNotFound(f"{self.nt} has no productions")
        rest = [q for q in g.productions if q.lhs != self.nt]
        if not any(self.nt in _rhs_names(q) for q in rest):
            raise PreconditionViolated(
                f"{self.nt} is not used anywhere; eliminate it instead")
        return g.with_productions(rest), replace(self, payload=mine)

    def invert(self):
        if self.payload is None:
            raise MissingPayload("undefine was never applied")
        return Define(tuple(self.payload))


@dataclass(frozen=True)
class Define(Step):
    productions: tuple[Production, ...]

    def apply(self, g):
        lhs = {q.lhs for q in self.productions}
        if len(lhs) != 1:
            raise PreconditionViolated("define needs productions of a single nonterminal")
        name = next(iter(lhs))
        if g.productions_of(name):
            raise NameClash(f"{name} is already defined")
        g2 = g.with_productions(g.productions + tuple(self.productions))
        return g2, self

    def invert(self):
        return Undefine(self.productions[0].lhs, payload=self.productions)


@dataclass(frozen=True)
class Eliminate(Step):
    """Remove a definition that nothing else refers to."""

    nt: str
    payload: Opt_[tuple] = field(default=None, compare=False, repr=False)

    def apply(self, g):
        mine = g.productions_of(self.nt)
        if not mine:
            raise TargetNotFound(f"{self.nt} has no productions")
        if self.nt in g.roots:
            raise PreconditionViolated(f"{self.nt} is a root")
        rest = [q for q in g.productions if q.lhs != self.nt]
        if any(self.nt in _rhs_names(q) for q in rest):
            raise PreconditionViolated(f"{self.nt} is still used; undefine it instead")
        return g.with_productions(rest), replace(self, payload=mine)

    def invert(self):
        if self.payload is None:
            raise MissingPayload("eliminate was never applied")
        return Introduce(tuple(self.payload))


@dataclass(frozen=True)
class Introduce(Step):
    productions: tuple[Production, ...]

    def apply(self, g):
        lhs = {q.lhs for q in self.productions}
        if len(lhs) != 1:
            raise PreconditionViolated("introduce needs productions of a single nonterminal")
        name = next(iter(lhs))
        if name in all_names(g):
            raise NameClash(f"{name} already occurs")
        g2 = g.with_productions(g.productions + tuple(self.productions))
        return g2, self

    def invert(self):
        return Eliminate(self.productions[0].lhs, payload=self.productions)


# ---------------------------------------------------------------------------
# Chains

@dataclass(frozen=True)
class Unchain(Step):
    """Collapse a chain production X -> Y into Y's sole definition.

    Y's definition is relabelled in place onto X with Y's name as the
    label, and the chain production disappears; Y itself vanishes.
    """

    production: Production  # the chain p('', X, Y)
    payload: Opt_[Production] = field(default=None, compare=False, repr=False)

    def apply(self, g):
        chain = self.production
        if chain.label or not isinstance(chain.rhs, Nonterminal):
            raise PreconditionViolated(f"{chain} is not an unlabelled chain")
        x, y = chain.lhs, chain.rhs.name
        if x == y:
            raise PreconditionViolated("reflexive chain; abridge it instead")
        if y in g.roots:
            raise PreconditionViolated(f"{y} is a root")
        y_defs = g.productions_of(y)
        if len(y_defs) != 1:
            raise PreconditionViolated(f"{y} has {len(y_defs)} definitions, need exactly 1")
        definition = y_defs[0]
        if definition.label:
            raise PreconditionViolated(f"definition of {y} is labelled")
        chain_index = _find(g, x, "", chain.rhs)
        uses = sum(_rhs_names(q).count(y)
                   for i, q in enumerate(g.productions) if i != chain_index)
        if uses > 0 or y in _rhs_names(definition):
            raise PreconditionViolated(f"{y} is used outside the chain")
        prods = []
        for i, q in enumerate(g.productions):
            if i == chain_index:
                continue
            if q is definition:
                prods.append(Production(y, x, definition.rhs))
            else:
                prods.append(q)
        return g.with_productions(prods), replace(self, payload=definition)

    def invert(self):
        if self.payload is None:
            raise MissingPayload("unchain was never applied")
        x = self.production.lhs
        y = self.production.rhs.name
        return Chain(Production(y, x, self.payload.rhs))


@dataclass(frozen=True)
class Chain(Step):
    """Split a labelled production back into a chain plus a definition."""

    production: Production  # p(Y, X, rhs)

    def apply(self, g):
        q = self.production
        if not q.label:
            raise PreconditionViolated("chain needs a labelled production")
        y = q.label
        if y in all_names(g):
            raise NameClash(f"{y} already occurs")
        i = _find(g, q.lhs, q.label, q.rhs)
        g2 = _replace_at(g, i, Production("", y, q.rhs))
        g2 = g2.with_productions(
            g2.productions[:i] + (Production("", q.lhs, Nonterminal(y)),)
            + g2.productions[i:])
        return g2, self

    def invert(self):
        q = self.production
        return Unchain(Production("", q.lhs, Nonterminal(q.label)),
                       payload=Production("", q.label, q.rhs))


@dataclass(frozen=True)
class Abridge(Step):
    """Remove a reflexive chain production X -> X."""

    production: Production

    def apply(self, g):
        q = self.production
        if q.label or q.rhs != Nonterminal(q.lhs):
            raise PreconditionViolated(f"{q} is not a reflexive chain")
        i = _find(g, q.lhs, "", q.rhs)
        prods = g.productions[:i] + g.productions[i + 1:]
        return g.with_productions(prods), self

    def invert(self):
        return Detour(self.production)


@dataclass(frozen=True)
class Detour(Step):
    production: Production

    def apply(self, g):
        q = self.production
        if q.label or q.rhs != Nonterminal(q.lhs):
            raise PreconditionViolated(f"{q} is not a reflexive chain")
        if q in g.productions:
            raise PreconditionViolated(f"{q} already present")
        return g.with_productions(g.productions + (q,)), self

    def invert(self):
        return Abridge(self.production)


# ---------------------------------------------------------------------------
# Extraction and inlining

@dataclass(frozen=True)
class Extract(Step):
    """Name a subexpression: replace its occurrences in scope by a fresh
    nonterminal and append the definition."""

    production: Production  # p('', N, rhs)
    scope: str = ""         # '' means the whole grammar
    payload: Opt_[tuple] = field(default=None, compare=False, repr=False)

    def apply(self, g):
        new = self.production
        if new.label:
            raise PreconditionViolated("extract takes an unlabelled definition")
        if new.lhs in all_names(g):
            raise NameClash(f"{new.lhs} already occurs")
        if self.payload is not None:
            pairs = self.payload
            g2 = _swap_productions(g, pairs)
            g2 = g2.with_productions(g2.productions + (new,))
            return g2, self
        pairs = []
        prods = []
        hits = 0
        for q in g.productions:
            if not self.scope or q.lhs == self.scope:
                rhs, n = replace_expr(q.rhs, new.rhs, Nonterminal(new.lhs))
                if n:
                    hits += n
                    q2 = Production(q.label, q.lhs, rhs)
                    pairs.append((q2, q))
                    prods.append(q2)
                    continue
            prods.append(q)
        if not hits:
            raise TargetNotFound(f"no occurrence of {new.rhs} in scope")
        g2 = g.with_productions(prods + [new])
        return g2, replace(self, payload=tuple(pairs))

    def invert(self):
        if self.payload is None:
            raise MissingPayload("extract was never applied")
        return Inline(self.production.lhs,
                      payload=(self.production, tuple((pre, post) for post, pre in self.payload)))


@dataclass(frozen=True)
class Inline(Step):
    """Replace every use of a singly-defined nonterminal by its body."""

    nt: str
    payload: Opt_[tuple] = field(default=None, compare=False, repr=False)

    def apply(self, g):
        defs = g.productions_of(self.nt)
        if len(defs) != 1:
            raise PreconditionViolated(f"{self.nt} has {len(defs)} definitions, need exactly 1")
        definition = defs[0]
        if definition.label:
            raise PreconditionViolated(f"definition of {self.nt} is labelled")
        if self.nt in g.roots:
            raise PreconditionViolated(f"{self.nt} is a root")
        if self.nt in _rhs_names(definition):
            raise PreconditionViolated(f"{self.nt} is recursive")
        pairs = []
        prods = []
        for q in g.productions:
            if q is definition:
                continue
            rhs, n = replace_expr(q.rhs, Nonterminal(self.nt), definition.rhs)
            if n:
                q2 = Production(q.label, q.lhs, rhs)
                pairs.append((q2, q))
                prods.append(q2)
            else:
                prods.append(q)
        g2 = g.with_productions(prods)
        return g2, replace(self, payload=(definition, tuple(pairs)))

    def invert(self):
        if self.payload is None:
            raise MissingPayload("inline was never applied")
        definition, pairs = self.payload
        return Extract(definition, "",
                       payload=tuple((pre, post) for post, pre in pairs))


# ---------------------------------------------------------------------------
# Sequence surgery

@dataclass(frozen=True)
class Project(Step):
    """Remove sequence elements; positions are 1-based into ``production.rhs``."""

    production: Production  # the full pre-step form
    positions: tuple[int, ...]

    def apply(self, g):
        q = self.production
        if not isinstance(q.rhs, Sequence):
            raise PreconditionViolated("project needs a sequence right-hand side")
        size = len(q.rhs.parts)
        if not self.positions or not all(1 <= k <= size for k in self.positions):
            raise PreconditionViolated(f"positions {self.positions} out of range 1..{size}")
        if len(set(self.positions)) == size:
            raise PreconditionViolated("cannot project away the entire sequence")
        i = _find(g, q.lhs, q.label, q.rhs)
        keep = [x for k, x in enumerate(q.rhs.parts, start=1)
                if k not in self.positions]
        rhs = keep[0] if len(keep) == 1 else Sequence(tuple(keep))
        g2 = _replace_at(g, i, Production(q.label, q.lhs, rhs))
        return g2, self

    def invert(self):
        return Inject(self.production, self.positions)


@dataclass(frozen=True)
class Inject(Step):
    """Re-insert sequence elements; ``production`` is the full post-step form."""

    production: Production
    positions: tuple[int, ...]

    def apply(self, g):
        q = self.production
        if not isinstance(q.rhs, Sequence):
            raise PreconditionViolated("inject needs a sequence right-hand side")
        keep = [x for k, x in enumerate(q.rhs.parts, start=1)
                if k not in self.positions]
        reduced = keep[0] if len(keep) == 1 else Sequence(tuple(keep))
        i = _find(g, q.lhs, q.label, reduced)
        g2 = _replace_at(g, i, q)
        return g2, self

    def invert(self):
        return Project(self.production, self.positions)


@dataclass(frozen=True)
class Narrow(Step):
    """Tighten iteration in all productions of ``scope``: x* -> x+ or x? -> x."""

    scope: str
    frm: Expr
    to: Expr
    payload: Opt_[tuple] = field(default=None, compare=False, repr=False)

    def apply(self, g):
        _check_narrow_pair(self.frm, self.to)
        g2, pairs = _rewrite_in_scope(g, self.scope, self.frm, self.to)
        return g2, replace(self, payload=pairs)

    def invert(self):
        if self.payload is None:
            raise MissingPayload("narrow was never applied")
        return Widen(self.scope, self.to, self.frm,
                     payload=tuple((pre, post) for post, pre in self.payload))


@dataclass(frozen=True)
class Widen(Step):
    """Loosen iteration in all productions of ``scope``: x+ -> x* or x -> x?."""

    scope: str
    frm: Expr
    to: Expr
    payload: Opt_[tuple] = field(default=None, compare=False, repr=False)

    def apply(self, g):
        _check_narrow_pair(self.to, self.frm)
        if self.payload is not None:
            return _swap_productions(g, self.payload), self
        g2, pairs = _rewrite_in_scope(g, self.scope, self.frm, self.to)
        return g2, replace(self, payload=pairs)

    def invert(self):
        if self.payload is None:
            raise MissingPayload("widen was never applied")
        return Narrow(self.scope, self.to, self.frm,
                      payload=tuple((pre, post) for post, pre in self.payload))


def _check_narrow_pair(frm: Expr, to: Expr):
    ok = ((isinstance(frm, Star) and to == Plus(frm.inner))
          or (isinstance(frm, Opt) and to == frm.inner))
    if not ok:
        raise PreconditionViolated(
            f"unsupported narrowing {frm} -> {to}; only x*->x+ and x?->x")


def _rewrite_in_scope(g: Grammar, scope: str, frm: Expr, to: Expr):
    pairs = []
    prods = []
    hits = 0
    for q in g.productions:
        if not scope or q.lhs == scope:
            rhs, n = replace_expr(q.rhs, frm, to)
            if n:
                hits += n
                q2 = Production(q.label, q.lhs, rhs)
                pairs.append((q2, q))
                prods.append(q2)
                continue
        prods.append(q)
    if not hits:
        raise TargetNotFound(f"no occurrence of {frm} in scope {scope or '<all>'}")
    return g.with_productions(prods), tuple(pairs)


@dataclass(frozen=True)
class Permute(Step):
    """Reorder a sequence right-hand side into the given form."""

    production: Production  # pre-step form
    to_rhs: Expr            # post-step form, a permutation of the same parts

    def apply(self, g):
        q = self.production
        if not isinstance(q.rhs, Sequence) or not isinstance(self.to_rhs, Sequence):
            raise PreconditionViolated("permute needs sequence right-hand sides")
        if Counter(q.rhs.parts) != Counter(self.to_rhs.parts):
            raise PreconditionViolated("target is not a permutation of the source")
        i = _find(g, q.lhs, q.label, q.rhs)
        g2 = _replace_at(g, i, Production(q.label, q.lhs, self.to_rhs))
        return g2, self

    def invert(self):
        q = self.production
        return Permute(Production(q.label, q.lhs, self.to_rhs), q.rhs)


# ---------------------------------------------------------------------------
# Uniting definitions

@dataclass(frozen=True)
class Unite(Step):
    """Merge nonterminal ``frm`` into ``into``: reassign its productions
    and redirect every use."""

    frm: str
    into: str
    payload: Opt_[tuple] = field(default=None, compare=False, repr=False)

    def apply(self, g):
        if self.frm == self.into:
            raise PreconditionViolated("uniting a nonterminal with itself")
        if not g.productions_of(self.frm):
            raise TargetNotFound(f"{self.frm} has no productions")
        if not g.productions_of(self.into):
            raise TargetNotFound(f"{self.into} has no productions")
        pairs = []
        prods = []
        for q in g.productions:
            lhs = self.into if q.lhs == self.frm else q.lhs
            rhs = rename_expr(q.rhs, self.frm, self.into)
            q2 = Production(q.label, lhs, rhs)
            if q2 != q:
                pairs.append((q2, q))
            prods.append(q2)
        roots = tuple(self.into if r == self.frm else r for r in g.roots)
        g2 = Grammar(roots, tuple(prods))
        return g2, replace(self, payload=(g.roots, tuple(pairs)))

    def invert(self):
        if self.payload is None:
            raise MissingPayload("unite was never applied")
        return SplitN(self.frm, self.into, payload=self.payload)


@dataclass(frozen=True)
class SplitN(Step):
    """Undo a unite from its recorded payload."""

    frm: str
    into: str
    payload: Opt_[tuple] = field(default=None, compare=False, repr=False)

    def apply(self, g):
        if self.payload is None:
            raise MissingPayload("splitn can only replay a recorded unite")
        roots, pairs = self.payload
        g2 = _swap_productions(g, pairs)
        return g2.with_roots(roots), self

    def invert(self):
        return Unite(self.frm, self.into)


# ---------------------------------------------------------------------------
# Associativity vs iteration

_LEFT, _RIGHT = "left", "right"


def _match_iteration(rhs: Expr):
    """Recognize seq([x, (o x)*]) or seq([(x o)*, x]); returns (x, o, side)."""
    if not isinstance(rhs, Sequence) or len(rhs.parts) != 2:
        return None
    head, tail = rhs.parts
    if (isinstance(tail, Star) and isinstance(tail.inner, Sequence)
            and len(tail.inner.parts) == 2 and tail.inner.parts[1] == head):
        return head, tail.inner.parts[0], _LEFT
    if (isinstance(head, Star) and isinstance(head.inner, Sequence)
            and len(head.inner.parts) == 2 and head.inner.parts[0] == tail):
        return tail, head.inner.parts[1], _RIGHT
    return None


@dataclass(frozen=True)
class AssocIterate(Step):
    """Rewrite an iteration form seq([x, (o x)*]) into the triple seq([x, o, x])."""

    lhs: str
    label: str = ""
    payload: Opt_[str] = field(default=None, compare=False, repr=False)

    def apply(self, g):
        i = _find(g, self.lhs, self.label)
        q = g.productions[i]
        m = _match_iteration(q.rhs)
        if m is None:
            raise PreconditionViolated(f"{q} is not in iteration form")
        x, o, side = m
        g2 = _replace_at(g, i, Production(q.label, q.lhs, Sequence((x, o, x))))
        return g2, replace(self, payload=side)

    def invert(self):
        if self.payload is None:
            raise MissingPayload("assoc was never applied")
        return Iterate(self.lhs, self.label, payload=self.payload)


@dataclass(frozen=True)
class Iterate(Step):
    """Rewrite a triple seq([x, o, x]) back into iteration form."""

    lhs: str
    label: str = ""
    payload: Opt_[str] = field(default=None, compare=False, repr=False)

    def apply(self, g):
        i = _find(g, self.lhs, self.label)
        q = g.productions[i]
        if (not isinstance(q.rhs, Sequence) or len(q.rhs.parts) != 3
                or q.rhs.parts[0] != q.rhs.parts[2]):
            raise PreconditionViolated(f"{q} is not an x-o-x triple")
        x, o, _ = q.rhs.parts
        side = self.payload or _LEFT
        if side == _LEFT:
            rhs = Sequence((x, Star(Sequence((o, x)))))
        else:
            rhs = Sequence((Star(Sequence((x, o))), x))
        g2 = _replace_at(g, i, Production(q.label, q.lhs, rhs))
        return g2, replace(self, payload=side)

    def invert(self):
        return AssocIterate(self.lhs, self.label, payload=self.payload or _LEFT)


# ---------------------------------------------------------------------------
# Script application

def _rhs_names(q: Production) -> list[str]:
    from .model import expr_nonterminals
    return list(expr_nonterminals(q.rhs))


def apply_step(g: Grammar, s: Step) -> Grammar:
    """Apply one step; raises a subclass of XbgfError on failure."""
    g2, _ = s.apply(g)
    return g2


def apply_step_traced(g: Grammar, s: Step) -> tuple[Grammar, Step]:
    """Apply one step and return it enriched with its inversion payload."""
    return s.apply(g)


def invert_step(s: Step) -> Step:
    """The inverse step; requires ``s`` to carry its inversion payload."""
    return s.invert()


def apply_script(g: Grammar, script: Script) -> Grammar:
    g2, _ = apply_script_traced(g, script)
    return g2


def apply_script_traced(g: Grammar, script: Script) -> tuple[Grammar, Script]:
    current = g
    done = []
    for i, s in enumerate(script):
        try:
            current, applied = s.apply(current)
        except (XbgfError, GrammarError) as exc:
            raise ScriptError(i, s, current, exc) from exc
        done.append(applied)
    return current, Script(tuple(done))


def invert_script(script: Script) -> Script:
    """Reversed script of inverses; every step must carry its payload."""
    return Script(tuple(s.invert() for s in reversed(script.steps)))
