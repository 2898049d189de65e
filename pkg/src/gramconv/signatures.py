"""Production signatures over ANF-shaped productions.

The signature of a production maps each nonterminal occurring in its
right-hand side to a multiplicity pattern: one mark per occurrence,
``1`` direct, ``+`` under a plus, ``*`` under a star, ``?`` under an
optional, canonically sorted ``1 < + < * < ?`` (so ``1+``, ``1*``,
``111``).
"""

from __future__ import annotations

from .model import Expr, Nonterminal, Opt, Plus, Production, Sequence, Star


class NotAnf(ValueError):
    """The production is not in abstract normal form."""


_MARK_ORDER = {"1": 0, "+": 1, "*": 2, "?": 3}


def canonical_pattern(marks) -> str:
    return "".join(sorted(marks, key=_MARK_ORDER.__getitem__))


def rhs_elements(rhs: Expr) -> list[tuple[str, str]]:
    """Left-to-right (mark, nonterminal) pairs of an ANF right-hand side."""
    parts = rhs.parts if isinstance(rhs, Sequence) else (rhs,)
    out = []
    for x in parts:
        if isinstance(x, Nonterminal):
            out.append(("1", x.name))
        elif isinstance(x, (Star, Plus, Opt)) and isinstance(x.inner, Nonterminal):
            mark = {Star: "*", Plus: "+", Opt: "?"}[type(x)]
            out.append((mark, x.inner.name))
        else:
            raise NotAnf(f"element {x} is not an (iterated) nonterminal")
    return out


def signature_elements(q: Production) -> list[tuple[str, str]]:
    return rhs_elements(q.rhs)


def production_signature(q: Production) -> dict[str, str]:
    """Signature as a name -> pattern mapping; raises NotAnf off-shape."""
    marks: dict[str, list[str]] = {}
    for mark, name in signature_elements(q):
        marks.setdefault(name, []).append(mark)
    return {name: canonical_pattern(ms) for name, ms in marks.items()}


def signature_pairs(q: Production) -> frozenset[tuple[str, str]]:
    return frozenset(production_signature(q).items())


def pattern_compatible(servant: str, master: str) -> bool:
    """Can a servant pattern cover a master pattern?

    Occurrence marks pair up one-to-one; a pair is admissible when the
    marks are equal, a servant ``*`` covers a master ``+``, or a servant
    ``?`` covers a master ``1``.
    """
    if len(servant) != len(master):
        return False
    s = {c: servant.count(c) for c in "1+*?"}
    m = {c: master.count(c) for c in "1+*?"}
    return (s["1"] <= m["1"] and s["+"] <= m["+"]
            and s["?"] - (m["1"] - s["1"]) == m["?"]
            and s["*"] - (m["+"] - s["+"]) == m["*"])


def mark_compatible(servant: str, master: str) -> bool:
    return servant == master or (servant, master) in (("*", "+"), ("?", "1"))


def format_signature(q: Production) -> str:
    """Human-readable rendering: {⟨name, pattern⟩, ...} sorted by name."""
    sig = production_signature(q)
    inner = ", ".join(f"⟨{name}, {pattern}⟩"
                      for name, pattern in sorted(sig.items()))
    return "{" + inner + "}"
