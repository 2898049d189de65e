"""Grammar convergence toolkit.

BGF grammars, bidirectional transformation steps, normalization to
abstract normal form, production-signature matching, and guided
convergence of a servant grammar onto a master grammar.
"""

from .model import Grammar, Production, canonical_eq, usage
from .textfmt import parse_bgf, serialize_bgf
from .normalize import detect_roots, is_anf, normalize
from .signatures import production_signature
from .matching import match_grammars, strong_match, weak_match
from .converge import converge, verify
from .ops import Script, apply_script, apply_step, invert_script, invert_step

__all__ = [
    "Grammar", "Production", "canonical_eq", "usage",
    "parse_bgf", "serialize_bgf",
    "detect_roots", "is_anf", "normalize",
    "production_signature", "match_grammars", "strong_match", "weak_match",
    "converge", "verify",
    "Script", "apply_script", "apply_step", "invert_script", "invert_step",
]
