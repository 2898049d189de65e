"""JSON export/import of grammars.

One object ``{roots: [...], productions: [{label, lhs, rhs}]}`` where
rhs is a tagged tree ``{kind, ...}``.
"""

from __future__ import annotations

from .model import (
    EMPTY, EPSILON, Choice, Empty, Epsilon, Expr, Grammar, Nonterminal, Opt,
    Plus, Production, Selector, SepPlus, Sequence, Star, Terminal,
)


def expr_to_json(e: Expr) -> dict:
    if isinstance(e, Epsilon):
        return {"kind": "epsilon"}
    if isinstance(e, Empty):
        return {"kind": "empty"}
    if isinstance(e, Terminal):
        return {"kind": "terminal", "text": e.text}
    if isinstance(e, Nonterminal):
        return {"kind": "nonterminal", "name": e.name}
    if isinstance(e, Sequence):
        return {"kind": "sequence", "parts": [expr_to_json(x) for x in e.parts]}
    if isinstance(e, Choice):
        return {"kind": "choice", "alts": [expr_to_json(a) for a in e.alts]}
    if isinstance(e, Star):
        return {"kind": "star", "inner": expr_to_json(e.inner)}
    if isinstance(e, Plus):
        return {"kind": "plus", "inner": expr_to_json(e.inner)}
    if isinstance(e, Opt):
        return {"kind": "optional", "inner": expr_to_json(e.inner)}
    if isinstance(e, Selector):
        return {"kind": "selector", "name": e.name, "inner": expr_to_json(e.inner)}
    if isinstance(e, SepPlus):
        return {"kind": "separated-plus",
                "item": expr_to_json(e.item),
                "separator": expr_to_json(e.separator)}
    raise TypeError(f"unknown expression {e!r}")


def expr_from_json(obj: dict) -> Expr:
    kind = obj["kind"]
    if kind == "epsilon":
        return EPSILON
    if kind == "empty":
        return EMPTY
    if kind == "terminal":
        return Terminal(obj["text"])
    if kind == "nonterminal":
        return Nonterminal(obj["name"])
    if kind == "sequence":
        return Sequence(tuple(expr_from_json(x) for x in obj["parts"]))
    if kind == "choice":
        return Choice(tuple(expr_from_json(a) for a in obj["alts"]))
    if kind == "star":
        return Star(expr_from_json(obj["inner"]))
    if kind == "plus":
        return Plus(expr_from_json(obj["inner"]))
    if kind == "optional":
        return Opt(expr_from_json(obj["inner"]))
    if kind == "selector":
        return Selector(obj["name"], expr_from_json(obj["inner"]))
    if kind == "separated-plus":
        return SepPlus(expr_from_json(obj["item"]), expr_from_json(obj["separator"]))
    raise ValueError(f"unknown expression kind {kind!r}")


def grammar_to_json(g: Grammar) -> dict:
    return {
        "roots": list(g.roots),
        "productions": [
            {"label": q.label, "lhs": q.lhs, "rhs": expr_to_json(q.rhs)}
            for q in g.productions
        ],
    }


def grammar_from_json(obj: dict) -> Grammar:
    return Grammar(
        tuple(obj["roots"]),
        tuple(Production(q["label"], q["lhs"], expr_from_json(q["rhs"]))
              for q in obj["productions"]),
    )
