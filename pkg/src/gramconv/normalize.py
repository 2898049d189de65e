"""Normalization of BGF grammars to abstract normal form.

ANF grammars carry no labels, terminals, selectors, choices, epsilons
or failures; every right-hand side is a chain nonterminal, an iterated
nonterminal, or a flat sequence of (possibly iterated) nonterminals.

``normalize`` runs a fixed cascade of phases, each to a fixpoint, and
repeats the cascade until the grammar stops changing.  It returns the
normal form together with the step trace that produces it, so the
normalization is replayable and invertible like any other script.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import (
    Choice, Empty, Epsilon, Grammar, Nonterminal, Opt, Plus, Production,
    Sequence, Star, all_names, expr_nonterminals, first_definition_order,
    reachable, usage,
)
from .ops import (
    Abridge, Abstractize, Anonymize, Eliminate, Extract, Inline, Reroot,
    Script, Step, Unchain, Undefine, Unlabel, Vertical, has_selectors,
    has_terminals,
)


class NormalizationDiverged(Exception):
    """The step budget ran out or a phase left non-ANF residue behind."""


@dataclass(frozen=True)
class AnfGrammar:
    grammar: Grammar
    trace: Script


def is_anf(g: Grammar) -> bool:
    """Check the ANF shape; exposed on the CLI as a validation."""
    return not list(anf_violations(g))


def anf_violations(g: Grammar):
    for q in g.productions:
        if q.label:
            yield f"labelled production p({q.label!r}, {q.lhs}, ...)"
        if not _anf_rhs(q.rhs):
            yield f"non-ANF right-hand side in {q.lhs}"


def _anf_item(e) -> bool:
    if isinstance(e, Nonterminal):
        return True
    return isinstance(e, (Star, Plus, Opt)) and isinstance(e.inner, Nonterminal)


def _anf_rhs(e) -> bool:
    if isinstance(e, Sequence):
        return all(_anf_item(x) for x in e.parts)
    return _anf_item(e)


# ---------------------------------------------------------------------------
# Root detection

def detect_roots(g: Grammar) -> list[str]:
    """Top nonterminals in first-definition order, falling back to the
    current roots when none qualify.

    A top nonterminal qualifies only if some other defined nonterminal
    is reachable from it: definition stubs such as an unused epsilon
    factory, a failure placeholder, or a chain onto an undefined name
    never become roots.
    """
    u = usage(g)
    if not u.top:
        return list(g.roots)
    candidates = first_definition_order(g, u.top)
    roots = [name for name in candidates if _substantial(g, name, u.defined)]
    return roots if roots else list(g.roots)


def _substantial(g: Grammar, name: str, defined: frozenset[str]) -> bool:
    return any(r != name and r in defined for r in reachable(g, name))


# ---------------------------------------------------------------------------
# The normalization driver

class _Normalizer:
    """Phase cascade with the bit of shared state the phases need.

    Unchaining is restricted to chains that vertical splitting created
    in this very run: those are the choice branches the normal form
    flattens away.  Pre-existing chains (a master grammar's alternative
    productions, a chain onto an undefined builtin) stay, which makes
    ANF grammars fixed points of the whole cascade.
    """

    def __init__(self, g: Grammar):
        self.budget = 10 * max(1, len(g.productions))
        self.grammar = g
        self.steps: list[Step] = []
        self.vertical_chains: set[tuple[str, str]] = set()
        self.extract_counters: dict[str, int] = {}

    def run(self) -> AnfGrammar:
        phases = [
            self.phase_reroot,
            self.phase_unlabel,
            self.phase_anonymize,
            self.phase_abstractize,
            self.phase_trivial_definitions,
            self.phase_vertical,
            self.phase_unchain,
            self.phase_abridge,
            self.phase_inline,
            self.phase_extract,
        ]
        changed = True
        while changed:
            changed = False
            for phase in phases:
                while True:
                    step = phase()
                    if step is None:
                        break
                    self.emit(step)
                    changed = True
        leftovers = list(anf_violations(self.grammar))
        if leftovers:
            raise NormalizationDiverged(
                "normalization left non-ANF residue: " + "; ".join(leftovers))
        return AnfGrammar(self.grammar, Script(tuple(self.steps)))

    def emit(self, step: Step):
        if len(self.steps) >= self.budget:
            raise NormalizationDiverged(
                f"step budget {self.budget} exceeded at {step}")
        self.grammar, applied = step.apply(self.grammar)
        self.steps.append(applied)

    # -- phases, each returning the next step or None when saturated

    def phase_reroot(self):
        target = detect_roots(self.grammar)
        if list(self.grammar.roots) != target:
            return Reroot(tuple(self.grammar.roots), tuple(target))
        return None

    def phase_unlabel(self):
        for q in self.grammar.productions:
            if q.label:
                return Unlabel(q.lhs, q.label)
        return None

    def phase_anonymize(self):
        for q in self.grammar.productions:
            if has_selectors(q.rhs):
                return Anonymize(q)
        return None

    def phase_abstractize(self):
        for q in self.grammar.productions:
            if has_terminals(q.rhs):
                return Abstractize(q)
        return None

    def phase_trivial_definitions(self):
        """Definitions reduced to epsilon/failure go away: undefine when
        the name stays in use, eliminate when nothing refers to it."""
        g = self.grammar
        for name in first_definition_order(g, {q.lhs for q in g.productions}):
            mine = g.productions_of(name)
            if not all(isinstance(q.rhs, (Epsilon, Empty)) for q in mine):
                continue
            used = any(name in expr_nonterminals(q.rhs)
                       for q in g.productions if q.lhs != name)
            if used:
                return Undefine(name)
            if name not in g.roots:
                return Eliminate(name)
        return None

    def phase_vertical(self):
        for q in self.grammar.productions:
            if isinstance(q.rhs, Choice) and not q.label:
                for other in self.grammar.productions_of(q.lhs):
                    if isinstance(other.rhs, Choice):
                        for alt in other.rhs.alts:
                            if isinstance(alt, Nonterminal):
                                self.vertical_chains.add((q.lhs, alt.name))
                return Vertical(q.lhs)
        return None

    def phase_unchain(self):
        g = self.grammar
        for index, q in enumerate(g.productions):
            if q.label or not isinstance(q.rhs, Nonterminal):
                continue
            y = q.rhs.name
            if (q.lhs, y) not in self.vertical_chains:
                continue
            if y == q.lhs or y in g.roots:
                continue
            y_defs = g.productions_of(y)
            if len(y_defs) != 1 or y_defs[0].label:
                continue
            uses = sum(list(expr_nonterminals(other.rhs)).count(y)
                       for i, other in enumerate(g.productions) if i != index)
            if uses == 0:
                return Unchain(q)
        return None

    def phase_abridge(self):
        for q in self.grammar.productions:
            if not q.label and q.rhs == Nonterminal(q.lhs):
                return Abridge(q)
        return None

    def phase_inline(self):
        """Inline used, non-root nonterminals whose sole definition is a
        bare chain onto another name; unused ones survive to ANF and are
        dealt with during structural resolution."""
        g = self.grammar
        for name in first_definition_order(g, {q.lhs for q in g.productions}):
            mine = g.productions_of(name)
            if len(mine) != 1 or mine[0].label or name in g.roots:
                continue
            rhs = mine[0].rhs
            if not isinstance(rhs, Nonterminal) or rhs.name == name:
                continue
            uses = sum(list(expr_nonterminals(q.rhs)).count(name)
                       for q in g.productions if q is not mine[0])
            if uses >= 1:
                return Inline(name)
        return None

    def phase_extract(self):
        """Composite alternatives of multiply-defined nonterminals get
        their own fresh definition ``<parent>_<k>``."""
        g = self.grammar
        taken = all_names(g)
        per_lhs: dict[str, int] = {}
        for q in g.productions:
            per_lhs[q.lhs] = per_lhs.get(q.lhs, 0) + 1
        for q in g.productions:
            if q.label or not isinstance(q.rhs, Sequence):
                continue
            if per_lhs[q.lhs] < 2:
                continue
            k = self.extract_counters.get(q.lhs, 0) + 1
            name = f"{q.lhs}_{k}"
            while name in taken:
                k += 1
                name = f"{q.lhs}_{k}"
            self.extract_counters[q.lhs] = k
            return Extract(Production("", name, q.rhs), q.lhs)
        return None


def normalize(g: Grammar) -> AnfGrammar:
    """Drive the grammar to ANF; deterministic, trace-replayable."""
    return _Normalizer(g).run()
