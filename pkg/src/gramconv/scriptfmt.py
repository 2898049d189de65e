"""Text format for transformation scripts.

One step per line, ``opname(arg, ...)``.  Expression arguments use the
BGF rhs syntax, production arguments are written ``p([label], lhs, rhs)``
with the label brackets left empty for unlabelled productions, name-list
arguments are bracketed, and ``#`` starts a comment.

    renameN(expr, expression)
    reroot([], [program])
    project(p([], function, str str+ expression NEWLINE+), [4])
"""

from __future__ import annotations

from .model import Expr, Production
from .ops import (
    Abridge, Abstractize, Anonymize, AssocIterate, Chain, Concretize,
    Deanonymize, Define, Designate, Detour, Eliminate, Extract, Horizontal,
    Inject, Inline, Introduce, Iterate, Narrow, Permute, Project, RenameN,
    Reroot, Script, SplitN, Step, Undefine, Unite, Unlabel, Vertical, Widen,
)
from .textfmt import BgfSyntaxError, _Parser, _tokenize, serialize_expr


class ScriptSyntaxError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Serialization

def _fmt_production(q: Production) -> str:
    return f"p([{q.label}], {q.lhs}, {serialize_expr(q.rhs)})"


def _fmt_names(names) -> str:
    return "[" + " ".join(names) + "]"


def _fmt_positions(positions) -> str:
    return "[" + " ".join(str(k) for k in positions) + "]"


def _fmt_assoc(name: str, s) -> str:
    label = f", [{s.label}]" if s.label else ""
    return f"{name}({s.lhs}{label})"


_SERIALIZERS = {
    RenameN: lambda s: f"renameN({s.frm}, {s.to})",
    Reroot: lambda s: f"reroot({_fmt_names(s.old_roots)}, {_fmt_names(s.new_roots)})",
    Unlabel: lambda s: f"unlabel({s.lhs}, [{s.label}])",
    Designate: lambda s: f"designate({_fmt_production(s.production)})",
    Anonymize: lambda s: f"anonymize({_fmt_production(s.production)})",
    Deanonymize: lambda s: f"deanonymize({_fmt_production(s.production)})",
    Abstractize: lambda s: f"abstractize({_fmt_production(s.production)})",
    Concretize: lambda s: f"concretize({_fmt_production(s.production)})",
    Vertical: lambda s: f"vertical({s.nt})",
    Horizontal: lambda s: f"horizontal({s.nt})",
    Undefine: lambda s: f"undefine({s.nt})",
    Define: lambda s: "define(" + ", ".join(_fmt_production(q) for q in s.productions) + ")",
    Eliminate: lambda s: f"eliminate({s.nt})",
    Introduce: lambda s: "introduce(" + ", ".join(_fmt_production(q) for q in s.productions) + ")",
    Unchain: lambda s: f"unchain({_fmt_production(s.production)})",
    Chain: lambda s: f"chain({_fmt_production(s.production)})",
    Abridge: lambda s: f"abridge({_fmt_production(s.production)})",
    Detour: lambda s: f"detour({_fmt_production(s.production)})",
    Inline: lambda s: f"inline({s.nt})",
    Project: lambda s: f"project({_fmt_production(s.production)}, {_fmt_positions(s.positions)})",
    Inject: lambda s: f"inject({_fmt_production(s.production)}, {_fmt_positions(s.positions)})",
    Narrow: lambda s: f"narrow({s.scope}, {serialize_expr(s.frm)}, {serialize_expr(s.to)})",
    Widen: lambda s: f"widen({s.scope}, {serialize_expr(s.frm)}, {serialize_expr(s.to)})",
    Permute: lambda s: f"permute({_fmt_production(s.production)}, {serialize_expr(s.to_rhs)})",
    Unite: lambda s: f"unite({s.frm}, {s.into})",
    SplitN: lambda s: f"splitN({s.frm}, {s.into})",
    AssocIterate: lambda s: _fmt_assoc("assoc", s),
    Iterate: lambda s: _fmt_assoc("iterate", s),
    Extract: lambda s: (f"extract({_fmt_production(s.production)}, {s.scope})"
                        if s.scope else f"extract({_fmt_production(s.production)})"),
}


def serialize_step(s: Step) -> str:
    ser = _SERIALIZERS.get(type(s))
    if ser is None:
        raise TypeError(f"cannot serialize step {s!r}")
    return ser(s)


def serialize_script(script: Script) -> str:
    return "".join(serialize_step(s) + "\n" for s in script)


# ---------------------------------------------------------------------------
# Parsing

class _StepParser(_Parser):
    def parse_script(self) -> Script:
        steps = []
        while self.peek().kind != "eof":
            steps.append(self.parse_step())
        return Script(tuple(steps))

    def parse_step(self) -> Step:
        name = self.expect("ident").value
        builder = _PARSERS.get(name)
        if builder is None:
            self.fail(f"unknown operator {name!r}")
        self.expect("(")
        step = builder(self)
        self.expect(")")
        return step

    def parse_name(self) -> str:
        return self.expect("ident").value

    def parse_name_list(self) -> tuple[str, ...]:
        self.expect("[")
        names = []
        while self.peek().kind == "ident":
            names.append(self.advance().value)
        self.expect("]")
        return tuple(names)

    def parse_positions(self) -> tuple[int, ...]:
        self.expect("[")
        out = []
        while self.peek().kind == "number":
            out.append(int(self.advance().value))
        self.expect("]")
        return tuple(out)

    def parse_label_brackets(self) -> str:
        self.expect("[")
        label = ""
        if self.peek().kind == "ident":
            label = self.advance().value
        self.expect("]")
        return label

    def parse_production(self) -> Production:
        tok = self.expect("ident")
        if tok.value != "p":
            self.fail("expected a production p([label], lhs, rhs)")
        self.expect("(")
        label = self.parse_label_brackets()
        self.expect(",")
        lhs = self.expect("ident").value
        self.expect(",")
        rhs = self.parse_choice()
        self.expect(")")
        return Production(label, lhs, rhs)

    def comma(self):
        self.expect(",")

    def parse_expr_arg(self) -> Expr:
        return self.parse_choice()


def _two_names(cls):
    def build(ps: _StepParser):
        a = ps.parse_name()
        ps.comma()
        b = ps.parse_name()
        return cls(a, b)
    return build


def _one_name(cls):
    def build(ps: _StepParser):
        return cls(ps.parse_name())
    return build


def _one_production(cls):
    def build(ps: _StepParser):
        return cls(ps.parse_production())
    return build


def _many_productions(cls):
    def build(ps: _StepParser):
        prods = [ps.parse_production()]
        while ps.peek().kind == ",":
            ps.advance()
            prods.append(ps.parse_production())
        return cls(tuple(prods))
    return build


def _positioned(cls):
    def build(ps: _StepParser):
        q = ps.parse_production()
        ps.comma()
        return cls(q, ps.parse_positions())
    return build


def _scoped_expr_pair(cls):
    def build(ps: _StepParser):
        scope = ps.parse_name()
        ps.comma()
        frm = ps.parse_expr_arg()
        ps.comma()
        to = ps.parse_expr_arg()
        return cls(scope, frm, to)
    return build


def _assoc_like(cls):
    def build(ps: _StepParser):
        lhs = ps.parse_name()
        label = ""
        if ps.peek().kind == ",":
            ps.advance()
            label = ps.parse_label_brackets()
        return cls(lhs, label)
    return build


def _parse_reroot(ps: _StepParser):
    old = ps.parse_name_list()
    ps.comma()
    new = ps.parse_name_list()
    return Reroot(old, new)


def _parse_unlabel(ps: _StepParser):
    lhs = ps.parse_name()
    ps.comma()
    label = ps.parse_label_brackets()
    return Unlabel(lhs, label)


def _parse_extract(ps: _StepParser):
    q = ps.parse_production()
    scope = ""
    if ps.peek().kind == ",":
        ps.advance()
        scope = ps.parse_name()
    return Extract(q, scope)


def _parse_permute(ps: _StepParser):
    q = ps.parse_production()
    ps.comma()
    return Permute(q, ps.parse_expr_arg())


_PARSERS = {
    "renameN": _two_names(RenameN),
    "reroot": _parse_reroot,
    "unlabel": _parse_unlabel,
    "designate": _one_production(Designate),
    "anonymize": _one_production(Anonymize),
    "deanonymize": _one_production(Deanonymize),
    "abstractize": _one_production(Abstractize),
    "concretize": _one_production(Concretize),
    "vertical": _one_name(Vertical),
    "horizontal": _one_name(Horizontal),
    "undefine": _one_name(Undefine),
    "define": _many_productions(Define),
    "eliminate": _one_name(Eliminate),
    "introduce": _many_productions(Introduce),
    "unchain": _one_production(Unchain),
    "chain": _one_production(Chain),
    "abridge": _one_production(Abridge),
    "detour": _one_production(Detour),
    "extract": _parse_extract,
    "inline": _one_name(Inline),
    "project": _positioned(Project),
    "inject": _positioned(Inject),
    "narrow": _scoped_expr_pair(Narrow),
    "widen": _scoped_expr_pair(Widen),
    "permute": _parse_permute,
    "unite": _two_names(Unite),
    "splitN": _two_names(SplitN),
    "assoc": _assoc_like(AssocIterate),
    "iterate": _assoc_like(Iterate),
}


def parse_script(text: str) -> Script:
    try:
        return _StepParser(_tokenize(text)).parse_script()
    except BgfSyntaxError as exc:
        raise ScriptSyntaxError(str(exc)) from exc
