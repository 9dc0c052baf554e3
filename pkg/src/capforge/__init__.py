"""Capability-driven security policy toolkit: catalogue queries, abstract
policy languages, a model-driven configuration compiler, HLP refinement over a
network landscape and recipe-based remediation."""

from .catalogue import Catalogue, compare, enforcers, load_catalogue, resolve_nsf, search, substitutes
from .errors import CapforgeError
from .mlp import match_policy, match_rule, parse_mlp, validate_mlp
from .schema import emit_abstract_language
from .translator import translate

__all__ = [
    "CapforgeError",
    "Catalogue",
    "compare",
    "emit_abstract_language",
    "enforcers",
    "load_catalogue",
    "match_policy",
    "match_rule",
    "parse_mlp",
    "resolve_nsf",
    "search",
    "substitutes",
    "translate",
    "validate_mlp",
]
