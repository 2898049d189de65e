"""Matching a servant ANF grammar against the master grammar.

Strong matches require positionally identical skeletons under the
nominal mapping; weak matches only require the master signature to be
covered by the servant signature, allowing servant-only leftovers
(mapped to ω), star-for-plus and optional-for-one multiplicity
slack, and element order differences.

``match_grammars`` pairs every master production with a distinct
servant production by constraint propagation (committing forced pairs
and the nonterminal pairs they pin down) with deterministic
backtracking when no move is forced.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import Grammar, Production
from .signatures import (
    NotAnf, mark_compatible, pattern_compatible, production_signature,
    signature_elements,
)
from .textfmt import serialize_production

OMEGA = "ω"


class NoCompleteMatch(Exception):
    """Some master production cannot be paired with any servant production."""


class AmbiguousMatch(Exception):
    """The tie-broken search still leaves the nominal mapping underdetermined."""


@dataclass(frozen=True)
class WeakEvidence:
    omitted: frozenset[str]  # servant names without a master counterpart
    mismatches: frozenset[tuple[str, str, str]]  # (servant name, servant pat, master pat)
    order_mismatch: bool

    def __bool__(self):
        return bool(self.omitted or self.mismatches or self.order_mismatch)


@dataclass(frozen=True)
class Strong:
    pass


@dataclass(frozen=True)
class Weak:
    evidence: WeakEvidence


@dataclass(frozen=True)
class MatchedPair:
    servant: Production
    master: Production | None
    kind: Strong | Weak | None


# ---------------------------------------------------------------------------
# Pairwise matching

def _extend(mapping: dict, pairs) -> dict | None:
    """Functional extension of an injective name mapping; None on conflict."""
    out = dict(mapping)
    targets = {v for v in out.values() if v != OMEGA}
    for s_name, m_name in pairs:
        known = out.get(s_name)
        if known is not None:
            if known != m_name:
                return None
            continue
        if m_name in targets:
            return None
        out[s_name] = m_name
        targets.add(m_name)
    return out


def strong_match(p: Production, q: Production, mapping: dict | None = None) -> bool:
    """Positional skeleton equality under a consistent name mapping."""
    mapping = mapping or {}
    try:
        es = signature_elements(p)
        em = signature_elements(q)
    except NotAnf:
        return False
    if [mark for mark, _ in es] != [mark for mark, _ in em]:
        return False
    pairs = [(p.lhs, q.lhs)]
    pairs += [(sn, mn) for (_, sn), (_, mn) in zip(es, em)]
    return _extend(mapping, pairs) is not None


def _covers(p: Production, q: Production, mapping: dict):
    """All injective coverings of q's signature entries by p's.

    Yields (cover, extended_mapping) where cover maps master names to
    servant names; deterministic enumeration order.
    """
    sig_s = production_signature(p)
    sig_m = production_signature(q)
    m_entries = sorted(sig_m.items())

    def recurse(i, used, mapping):
        if i == len(m_entries):
            yield dict(), mapping
            return
        m_name, m_pat = m_entries[i]
        for s_name, s_pat in sorted(sig_s.items()):
            if s_name in used or not pattern_compatible(s_pat, m_pat):
                continue
            extended = _extend(mapping, [(s_name, m_name)])
            if extended is None:
                continue
            for cover, final in recurse(i + 1, used | {s_name}, extended):
                full = {m_name: s_name}
                full.update(cover)
                yield full, final

    yield from recurse(0, frozenset(), mapping)


def _evidence(p: Production, q: Production, cover: dict) -> WeakEvidence:
    sig_s = production_signature(p)
    sig_m = production_signature(q)
    covered = set(cover.values())
    omitted = frozenset(n for n in sig_s if n not in covered)
    mismatches = frozenset(
        (s_name, sig_s[s_name], sig_m[m_name])
        for m_name, s_name in cover.items()
        if sig_s[s_name] != sig_m[m_name])
    name_map = {s: m for m, s in cover.items()}
    es = [(mark, name) for mark, name in signature_elements(p)
          if name not in omitted]
    em = signature_elements(q)
    ordered = (len(es) == len(em)
               and all(mark_compatible(sm, mm) and name_map.get(sn) == mn
                       for (sm, sn), (mm, mn) in zip(es, em)))
    return WeakEvidence(omitted, mismatches, not ordered)


def weak_match(p: Production, q: Production, mapping: dict | None = None) -> WeakEvidence | None:
    """Evidence for a weak match, or None when the pair cannot match."""
    mapping = mapping or {}
    try:
        base = _extend(mapping, [(p.lhs, q.lhs)])
        if base is None:
            return None
        for cover, _ in _covers(p, q, base):
            return _evidence(p, q, cover)
    except NotAnf:
        return None
    return None


# ---------------------------------------------------------------------------
# Whole-grammar matching

def _forced_pairs(p: Production, q: Production, mapping: dict) -> dict | None:
    """Name pairs shared by every covering; None when no covering exists."""
    base = _extend(mapping, [(p.lhs, q.lhs)])
    if base is None:
        return None
    shared: dict | None = None
    for cover, _ in _covers(p, q, base):
        pairs = {s: m for m, s in cover.items()}
        if shared is None:
            shared = pairs
        else:
            shared = {s: m for s, m in shared.items() if pairs.get(s) == m}
        if not shared:
            break
    if shared is None:
        return None
    shared[p.lhs] = q.lhs
    return shared


class _Search:
    def __init__(self, servant: Grammar, master: Grammar):
        self.s_prods = list(servant.productions)
        self.m_prods = list(master.productions)

    def candidates(self, mi: int, mapping: dict, taken: set[int]):
        strong, weak = [], []
        q = self.m_prods[mi]
        for si, p in enumerate(self.s_prods):
            if si in taken:
                continue
            if strong_match(p, q, mapping):
                strong.append(si)
            elif weak_match(p, q, mapping) is not None:
                weak.append(si)
        return strong, weak

    def commit(self, mi: int, si: int, prefer_strong: bool, mapping: dict) -> dict | None:
        p, q = self.s_prods[si], self.m_prods[mi]
        if prefer_strong and strong_match(p, q, mapping):
            pairs = [(p.lhs, q.lhs)]
            pairs += [(sn, mn) for (_, sn), (_, mn)
                      in zip(signature_elements(p), signature_elements(q))]
            return _extend(mapping, pairs)
        forced = _forced_pairs(p, q, mapping)
        if forced is None:
            return None
        return _extend(mapping, forced.items())

    def solve(self, mapping: dict, assignment: dict):
        while len(assignment) < len(self.m_prods):
            move = None
            all_candidates = {}
            for mi in range(len(self.m_prods)):
                if mi in assignment:
                    continue
                strong, weak = self.candidates(mi, mapping, set(assignment.values()))
                if not strong and not weak:
                    return None
                all_candidates[mi] = (strong, weak)
                if len(strong) == 1:
                    move = (mi, strong[0])
                    break
                if not strong and len(weak) == 1:
                    move = (mi, weak[0])
                    break
            if move is not None:
                mi, si = move
                extended = self.commit(mi, si, True, mapping)
                if extended is None:
                    return None
                mapping = extended
                assignment = {**assignment, mi: si}
                continue
            # branch on the master production with fewest candidates
            mi = min(all_candidates,
                     key=lambda k: (len(all_candidates[k][0]) + len(all_candidates[k][1]), k))
            strong, weak = all_candidates[mi]
            for si in strong + weak:
                extended = self.commit(mi, si, si in strong, mapping)
                if extended is None:
                    continue
                result = self.solve(extended, {**assignment, mi: si})
                if result is not None:
                    return result
            return None
        # full assignment: validate every pair under the final mapping
        for mi, si in assignment.items():
            p, q = self.s_prods[si], self.m_prods[mi]
            if not strong_match(p, q, mapping) and weak_match(p, q, mapping) is None:
                return None
        return mapping, assignment


def match_grammars(servant: Grammar, master: Grammar):
    """Pair master productions with servant productions.

    Returns (pairs, mapping): one MatchedPair per servant production in
    servant order (master None for the unmatched leftovers), and the
    nominal mapping including ω entries for servant-only names.
    """
    search = _Search(servant, master)
    mapping: dict = {}
    for s_root, m_root in zip(servant.roots, master.roots):
        extended = _extend(mapping, [(s_root, m_root)])
        if extended is None:
            raise NoCompleteMatch(
                f"root pairing {s_root} -> {m_root} is inconsistent")
        mapping = extended
    solved = search.solve(mapping, {})
    if solved is None:
        raise NoCompleteMatch(_diagnose(search, mapping))
    mapping, assignment = solved

    # Pin down names that only ambiguity between coverings left open.
    changed = True
    while changed:
        changed = False
        for mi, si in assignment.items():
            p, q = search.s_prods[si], search.m_prods[mi]
            if strong_match(p, q, mapping):
                continue
            forced = _forced_pairs(p, q, mapping)
            if forced is None:
                raise NoCompleteMatch(
                    f"{serialize_production(p)} no longer matches "
                    f"{serialize_production(q)} under the final mapping")
            extended = _extend(mapping, forced.items())
            if extended is None:
                raise AmbiguousMatch(
                    f"conflicting forced pairs for {serialize_production(p)}")
            if extended != mapping:
                mapping = extended
                changed = True

    # Evidence under the final mapping; ω entries for leftover names.
    kinds: dict[int, Strong | Weak] = {}
    omitted_names: list[str] = []
    for mi, si in assignment.items():
        p, q = search.s_prods[si], search.m_prods[mi]
        if strong_match(p, q, mapping):
            kinds[si] = Strong()
            continue
        evidence = weak_match(p, q, mapping)
        if evidence is None:
            raise NoCompleteMatch(
                f"{serialize_production(p)} no longer matches "
                f"{serialize_production(q)} under the final mapping")
        kinds[si] = Weak(evidence)
        omitted_names.extend(sorted(evidence.omitted))
    for name in omitted_names:
        if name not in mapping:
            mapping = {**mapping, name: OMEGA}

    matched_names = set()
    for mi, si in assignment.items():
        matched_names.add(search.s_prods[si].lhs)
        matched_names.update(production_signature(search.s_prods[si]))
    unmapped = sorted(matched_names - mapping.keys())
    if unmapped:
        raise AmbiguousMatch(f"names {unmapped} remain unmapped in matched productions")

    by_servant = {si: mi for mi, si in assignment.items()}
    pairs = []
    for si, p in enumerate(search.s_prods):
        if si in by_servant:
            q = search.m_prods[by_servant[si]]
            pairs.append(MatchedPair(p, q, kinds[si]))
        else:
            pairs.append(MatchedPair(p, None, None))
    return pairs, mapping


def _diagnose(search: _Search, mapping: dict) -> str:
    hopeless = []
    for mi, q in enumerate(search.m_prods):
        strong, weak = search.candidates(mi, mapping, set())
        if not strong and not weak:
            hopeless.append(serialize_production(q))
    if hopeless:
        return "no candidates at all for: " + "; ".join(hopeless)
    return "assignment search exhausted without a complete match"
