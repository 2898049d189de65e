"""End-to-end guided convergence of a servant grammar onto a master.

The pipeline: trigger grammar design mutations, normalize to ANF, infer
the nominal mapping by signature matching, emit the rename script, emit
the structural script, and verify that the concatenation really turns
the servant into the master.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .matching import OMEGA, MatchedPair, Strong, Weak, match_grammars
from .model import (
    Grammar, Nonterminal, Opt, Plus, Production, Sequence, Star, Terminal,
    all_names, canonical_eq, reachable, rename_expr,
)
from .normalize import AnfGrammar, normalize
from .ops import (
    Anonymize, AssocIterate, Deanonymize, Designate, Eliminate, Narrow,
    Permute, Project, RenameN, Reroot, Script, ScriptError, Step, Unite,
    Unlabel, XbgfError, apply_script, apply_script_traced, has_selectors,
    strip_selectors,
)
from .signatures import mark_compatible, rhs_elements
from .textfmt import serialize_production

log = logging.getLogger(__name__)

TMP_LABEL = "tmplabel"


class Unresolvable(Exception):
    """A structural difference no operator covers."""


@dataclass(frozen=True)
class ConvergenceResult:
    mutations: Script
    normalization: Script
    mapping: dict
    renames: Script
    structural: Script
    final: Grammar
    # extras the report generator feeds on
    source: Grammar
    anf: Grammar
    matches: tuple[MatchedPair, ...]

    @property
    def full_script(self) -> Script:
        return self.mutations + self.normalization + self.renames + self.structural


# ---------------------------------------------------------------------------
# Triggered mutations

def _bracket_reference(e) -> str | None:
    """The B of a parenthesized reference '(' B ')', selectors ignored."""
    s = strip_selectors(e)
    if (isinstance(s, Sequence) and len(s.parts) == 3
            and s.parts[0] == Terminal("(") and s.parts[2] == Terminal(")")
            and isinstance(s.parts[1], Nonterminal)):
        return s.parts[1].name
    return None


def _match_iteration_form(stripped) -> str | None:
    """Recognize seq([x, (o x)*]) / seq([(x o)*, x]) over nonterminals."""
    if not isinstance(stripped, Sequence) or len(stripped.parts) != 2:
        return None
    head, tail = stripped.parts
    if (isinstance(head, Nonterminal) and isinstance(tail, Star)
            and isinstance(tail.inner, Sequence) and len(tail.inner.parts) == 2
            and tail.inner.parts[1] == head
            and isinstance(tail.inner.parts[0], Nonterminal)):
        return "left"
    if (isinstance(tail, Nonterminal) and isinstance(head, Star)
            and isinstance(head.inner, Sequence) and len(head.inner.parts) == 2
            and head.inner.parts[0] == tail
            and isinstance(head.inner.parts[1], Nonterminal)):
        return "right"
    return None


def trigger_mutations(servant: Grammar, master: Grammar) -> tuple[Grammar, Script]:
    """Apply the two design-mutation triggers to fixpoint, in order:
    layer-uniting of bracket-referenced nonterminals, then collapse of
    iteration forms into associative triples."""
    g = servant
    steps: list[Step] = []

    def emit(step: Step):
        nonlocal g
        g, applied = step.apply(g)
        steps.append(applied)

    # T1: unite A into B when A has a '(' B ')' production and B reaches A
    changed = True
    while changed:
        changed = False
        for q in g.productions:
            alts = q.rhs.alts if hasattr(q.rhs, "alts") else (q.rhs,)
            for alt in alts:
                b = _bracket_reference(alt)
                if b is not None and b != q.lhs and q.lhs in reachable(g, b):
                    emit(Unite(q.lhs, b))
                    changed = True
                    break
            if changed:
                break

    # T2: iteration collapse with label/selector bookkeeping
    changed = True
    while changed:
        changed = False
        for q in g.productions:
            stripped = strip_selectors(q.rhs)
            side = _match_iteration_form(stripped)
            if side is None:
                continue
            label = q.label
            rhs = q.rhs
            if not label:
                emit(Designate(Production(TMP_LABEL, q.lhs, rhs)))
                label = TMP_LABEL
            selectored = has_selectors(rhs)
            if selectored:
                emit(Anonymize(Production(label, q.lhs, rhs)))
            emit(AssocIterate(q.lhs, label))
            if selectored:
                head, tail = rhs.parts
                if side == "left":
                    star = tail
                    elements = (head,) + star.inner.parts
                else:
                    star = head
                    elements = star.inner.parts + (tail,)
                triple = Sequence(tuple(elements))
                emit(Deanonymize(Production(label, q.lhs, triple)))
            if label == TMP_LABEL and not q.label:
                emit(Unlabel(q.lhs, TMP_LABEL))
            changed = True
            break

    return g, Script(tuple(steps))


# ---------------------------------------------------------------------------
# Nominal resolution

def nominal_resolution(mapping: dict, grammar: Grammar | None = None) -> Script:
    """Rename script realizing the mapping: one rename per non-identity,
    non-ω pair, routed through temporaries when a target is only
    vacated by a later rename."""
    pending = [(f, t) for f, t in mapping.items() if t != OMEGA and f != t]
    if grammar is not None:
        names = set(all_names(grammar))
    else:
        names = {f for f, _ in mapping.items()}
    steps: list[Step] = []

    def emit(frm: str, to: str):
        steps.append(RenameN(frm, to))
        names.discard(frm)
        names.add(to)

    queue = pending
    while queue:
        progress = False
        deferred = []
        for frm, to in queue:
            if to not in names:
                emit(frm, to)
                progress = True
            else:
                deferred.append((frm, to))
        if deferred and not progress:
            vacated = {f for f, _ in deferred}
            for i, (frm, to) in enumerate(deferred):
                if to in vacated:
                    tmp = _fresh_temp(names)
                    emit(frm, tmp)
                    deferred[i] = (tmp, to)
                    progress = True
                    break
            if not progress:
                frm, to = deferred[0]
                raise XbgfError(
                    f"rename target {to} is occupied and never vacated") from None
        queue = deferred
    return Script(tuple(steps))


def _fresh_temp(names) -> str:
    k = 1
    while f"tmp_{k}" in names:
        k += 1
    return f"tmp_{k}"


# ---------------------------------------------------------------------------
# Structural resolution

def _rename_production(q: Production, mapping: dict) -> Production:
    rhs = q.rhs
    for frm, to in mapping.items():
        if to != OMEGA and frm != to:
            rhs = rename_expr(rhs, frm, to)
    lhs = mapping.get(q.lhs, q.lhs)
    if lhs == OMEGA:
        lhs = q.lhs
    return Production(q.label, lhs, rhs)


def _element_name(e) -> str:
    if isinstance(e, Nonterminal):
        return e.name
    if isinstance(e, (Star, Plus, Opt)):
        return e.inner.name
    raise Unresolvable(f"element {e} is not an (iterated) nonterminal")


def structural_resolution(servant_renamed: Grammar, master: Grammar,
                          matches, mapping: dict) -> tuple[Script, Grammar]:
    """Residual script fixing shape differences after renaming.

    Emission order: reroot, projections, eliminations, narrowings,
    permutations.  Returns the script and the resulting grammar.
    """
    g = servant_renamed
    steps: list[Step] = []

    def emit(step: Step):
        nonlocal g
        try:
            g, applied = step.apply(g)
        except XbgfError as exc:
            raise Unresolvable(f"structural step {step} failed: {exc}") from exc
        steps.append(applied)

    if tuple(g.roots) != tuple(master.roots):
        emit(Reroot(tuple(g.roots), tuple(master.roots)))

    # translate match info into renamed terms
    weak_pairs = []
    unmatched = []
    for pair in matches:
        if pair.master is None:
            unmatched.append(pair.servant)
        elif isinstance(pair.kind, Weak):
            weak_pairs.append((_rename_production(pair.servant, mapping),
                               pair.master, pair.kind.evidence))

    omitted_translated = {}
    for renamed, _, evidence in weak_pairs:
        names = set()
        for name in evidence.omitted:
            target = mapping.get(name, name)
            names.add(name if target == OMEGA else target)
        omitted_translated[id(renamed)] = names

    # 1. projections, left to right per production
    for renamed, m_prod, evidence in weak_pairs:
        omitted = omitted_translated[id(renamed)]
        if not omitted:
            continue
        current = _current_rhs(g, renamed)
        while True:
            parts = current.parts if isinstance(current, Sequence) else (current,)
            position = next((k for k, e in enumerate(parts, start=1)
                             if _element_name(e) in omitted), None)
            if position is None:
                break
            if not isinstance(current, Sequence):
                raise Unresolvable(
                    f"cannot project the whole right-hand side of {renamed.lhs}")
            emit(Project(Production("", renamed.lhs, current), (position,)))
            current = _current_rhs(g, renamed)

    # 2. eliminations of unmatched servant definitions
    for lhs in dict.fromkeys(q.lhs for q in unmatched):
        emit(Eliminate(lhs))

    # 3. narrowings, derived by aligning elements with the master's
    narrowed: set[tuple[str, object]] = set()
    for renamed, m_prod, evidence in weak_pairs:
        current = _current_rhs(g, renamed)
        for s_elem, m_elem in _align(current, m_prod.rhs):
            if s_elem == m_elem or (renamed.lhs, s_elem) in narrowed:
                continue
            emit(Narrow(renamed.lhs, s_elem, m_elem))
            narrowed.add((renamed.lhs, s_elem))

    # 4. permutations
    for renamed, m_prod, evidence in weak_pairs:
        current = _current_rhs(g, renamed)
        if current == m_prod.rhs:
            continue
        if not isinstance(current, Sequence):
            raise Unresolvable(
                f"{renamed.lhs}: residual difference {current} vs {m_prod.rhs}")
        emit(Permute(Production("", renamed.lhs, current), m_prod.rhs))

    return Script(tuple(steps)), g


def _current_rhs(g: Grammar, renamed: Production):
    """Track the production through the steps applied so far: same lhs,
    element names a subset of the renamed original's."""
    want = set()
    parts = renamed.rhs.parts if isinstance(renamed.rhs, Sequence) else (renamed.rhs,)
    for e in parts:
        want.add(_element_name(e))
    hits = []
    for q in g.productions:
        if q.lhs != renamed.lhs or q.label:
            continue
        qparts = q.rhs.parts if isinstance(q.rhs, Sequence) else (q.rhs,)
        names = {_element_name(e) for e in qparts}
        if names <= want:
            hits.append(q)
    if len(hits) != 1:
        raise Unresolvable(
            f"cannot locate the production for {serialize_production(renamed)}")
    return hits[0].rhs


def _align(current, master_rhs):
    """Stable pairing of current elements with master elements that only
    differ by an admissible multiplicity mark."""
    cur = current.parts if isinstance(current, Sequence) else (current,)
    mas = master_rhs.parts if isinstance(master_rhs, Sequence) else (master_rhs,)
    if len(cur) != len(mas):
        raise Unresolvable(
            f"element counts differ: {len(cur)} vs {len(mas)}")
    used = set()
    pairs = []
    for m_elem in mas:
        chosen = None
        for i, s_elem in enumerate(cur):
            if i in used:
                continue
            if _compatible_elements(s_elem, m_elem):
                chosen = i
                break
        if chosen is None:
            raise Unresolvable(f"no element aligns with {m_elem}")
        used.add(chosen)
        pairs.append((cur[chosen], m_elem))
    return pairs


def _mark_of(e) -> str:
    if isinstance(e, Nonterminal):
        return "1"
    return {Star: "*", Plus: "+", Opt: "?"}[type(e)]


def _compatible_elements(s_elem, m_elem) -> bool:
    return (_element_name(s_elem) == _element_name(m_elem)
            and mark_compatible(_mark_of(s_elem), _mark_of(m_elem)))


# ---------------------------------------------------------------------------
# The driver

def converge(servant: Grammar, master: Grammar) -> ConvergenceResult:
    """Infer the full transformation script from servant to master."""
    mutated, mutations = trigger_mutations(servant, master)
    anf: AnfGrammar = normalize(mutated)
    matches, mapping = match_grammars(anf.grammar, master)
    rename_script = nominal_resolution(mapping, anf.grammar)
    renamed, renames = apply_script_traced(anf.grammar, rename_script)
    structural, final = structural_resolution(renamed, master, matches, mapping)
    if not canonical_eq(final, master):
        raise Unresolvable("resulting grammar still differs from the master")
    return ConvergenceResult(
        mutations=mutations,
        normalization=anf.trace,
        mapping=mapping,
        renames=renames,
        structural=structural,
        final=final,
        source=servant,
        anf=anf.grammar,
        matches=tuple(matches),
    )


def verify(servant: Grammar, full_script: Script, master: Grammar) -> bool:
    """Replay the script over the servant and compare with the master."""
    try:
        result = apply_script(servant, full_script)
    except ScriptError as exc:
        log.warning("verification replay failed: %s", exc)
        return False
    return canonical_eq(result, master)
