"""Remediation recipe language: PEG grammar, visitor, recipe books and selection.

A recipe is one step per line; ``#`` starts a comment::

    filter l4 from $attacker to $victim [proto tcp] [ports 80,443]
    filter l7 url $urls deny
    isolate host $victim
    deploy nsf requiring CapA,CapB near $victim
    ban wallet $wallets

Arguments are literals or variables bound from a threat report.
"""

from __future__ import annotations

import json
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Union

from parsimonious.exceptions import IncompleteParseError, ParseError as PegParseError, VisitationError
from parsimonious.grammar import Grammar
from parsimonious.nodes import NodeVisitor

from .errors import CapforgeError, GrammarError, NoApplicableRecipe, ParseError

VARIABLES = ("attacker", "victim", "ports", "urls", "wallets", "dids")
THREAT_TYPES = ("crypto_miner", "ddos_botnet", "auth_bruteforce", "generic")

GRAMMAR = Grammar(
    r"""
    recipe       = line*
    line         = hs? (step hs?)? comment? nl
    step         = filter_l4 / filter_l7 / isolate / deploy / ban
    filter_l4    = "filter" ws "l4" ws "from" ws arg ws "to" ws arg l4_option*
    l4_option    = ws (proto_option / ports_option)
    proto_option = "proto" ws arg
    ports_option = "ports" ws list_arg
    filter_l7    = "filter" ws "l7" ws "url" ws arg ws decision
    decision     = "allow" / "deny"
    isolate      = "isolate" ws "host" ws arg
    deploy       = "deploy" ws "nsf" ws "requiring" ws list_arg ws "near" ws arg
    ban          = "ban" ws id_kind ws list_arg
    id_kind      = "wallet" / "did"
    list_arg     = variable / literal_list
    literal_list = atom ("," atom)*
    arg          = variable / atom
    variable     = ~r"\$[A-Za-z_][A-Za-z0-9_]*"
    atom         = quoted / bare
    quoted       = ~r"\"[^\"\n]*\""
    bare         = ~r"[^\s,#$\"][^\s,#]*"
    comment      = ~r"#[^\n]*"
    ws           = ~r"[ \t]+"
    hs           = ~r"[ \t]+"
    nl           = ~r"\r?\n"
    """
)


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return f"${self.name}"


Arg = Union[str, Var]
ListArg = Union[tuple[str, ...], Var]


@dataclass(frozen=True)
class FilterL4:
    src: Arg
    dst: Arg
    proto: Arg | None = None
    ports: ListArg | None = None


@dataclass(frozen=True)
class FilterL7:
    url: Arg
    decision: str


@dataclass(frozen=True)
class IsolateHost:
    host: Arg


@dataclass(frozen=True)
class DeployNsf:
    capabilities: ListArg
    near: Arg


@dataclass(frozen=True)
class Ban:
    id_kind: str
    ids: ListArg


Step = Union[FilterL4, FilterL7, IsolateHost, DeployNsf, Ban]


@dataclass(frozen=True)
class Recipe:
    id: str
    steps: tuple[Step, ...]
    applicable_threats: frozenset[str] = frozenset()
    effectiveness: Mapping[str, float] = field(default_factory=dict)
    text: str = ""

    def score(self, threat_type: str) -> float:
        # returned as stored so exact numeric types keep exact comparisons
        return self.effectiveness.get(threat_type, 0.0)


class _Visitor(NodeVisitor):
    def visit_recipe(self, node, children):
        return [step for step in children if step is not None]

    def visit_line(self, node, children):
        _, step, _, _ = children
        if isinstance(step, list):
            return step[0][0]
        return None

    def visit_step(self, node, children):
        return children[0]

    def visit_filter_l4(self, node, children):
        src, dst, options = children[6], children[10], children[11]
        opts = dict(options) if isinstance(options, list) else {}
        return FilterL4(src, dst, opts.get("proto"), opts.get("ports"))

    def visit_l4_option(self, node, children):
        return children[1][0]

    def visit_proto_option(self, node, children):
        return ("proto", children[2])

    def visit_ports_option(self, node, children):
        return ("ports", children[2])

    def visit_filter_l7(self, node, children):
        return FilterL7(children[6], children[8])

    def visit_decision(self, node, children):
        return node.text

    def visit_isolate(self, node, children):
        return IsolateHost(children[4])

    def visit_deploy(self, node, children):
        return DeployNsf(children[6], children[10])

    def visit_ban(self, node, children):
        return Ban(children[2], children[4])

    def visit_id_kind(self, node, children):
        return node.text

    def visit_list_arg(self, node, children):
        return children[0]

    def visit_literal_list(self, node, children):
        first, rest = children
        items = [first]
        if isinstance(rest, list):
            items.extend(r[1] for r in rest)
        return tuple(items)

    def visit_arg(self, node, children):
        return children[0]

    def visit_variable(self, node, children):
        name = node.text[1:]
        if name not in VARIABLES:
            line, column = _position(node.full_text, node.start)
            raise GrammarError(f"unknown variable ${name}", line, column)
        return Var(name)

    def visit_atom(self, node, children):
        return children[0]

    def visit_quoted(self, node, children):
        return node.text[1:-1]

    def visit_bare(self, node, children):
        return node.text

    def generic_visit(self, node, children):
        return children or node


def _position(text: str, pos: int) -> tuple[int, int]:
    line = text.count("\n", 0, pos) + 1
    column = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, column


def parse_recipe(text: str, recipe_id: str = "recipe", **meta) -> Recipe:
    """Parse recipe text; raises :class:`GrammarError` with line and column."""
    source = text if text.endswith("\n") else text + "\n"
    try:
        tree = GRAMMAR.parse(source)
    except IncompleteParseError as exc:
        line, column = _position(source, exc.pos)
        raise GrammarError(f"unrecognised step {source[exc.pos:].split(chr(10), 1)[0]!r}", line, column) from None
    except PegParseError as exc:
        line, column = _position(source, exc.pos)
        raise GrammarError("malformed recipe", line, column) from None
    try:
        steps = _Visitor().visit(tree)
    except VisitationError as exc:
        original = exc.original_class if hasattr(exc, "original_class") else None
        if isinstance(exc.__cause__, GrammarError):
            raise exc.__cause__ from None
        raise GrammarError(f"malformed recipe ({original})", 1, 1) from None
    if not steps:
        line, column = _position(source, len(source.rstrip("\n")))
        raise GrammarError("a recipe needs at least one step", line, column)
    return Recipe(recipe_id, tuple(steps), text=text, **meta)


def recipe_variables(recipe: Recipe) -> set[str]:
    names = set()
    for step in recipe.steps:
        for value in vars(step).values():
            if isinstance(value, Var):
                names.add(value.name)
    return names


def load_recipe_book(document: Mapping | str | Path) -> list[Recipe]:
    """Read ``{"recipes": [{id, threats, effectiveness, text}]}``."""
    if not isinstance(document, Mapping):
        path = Path(document)
        try:
            document = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ParseError("recipe book not found", path=str(path)) from None
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, path=str(path), line=exc.lineno, column=exc.colno) from None
    book = []
    for i, r in enumerate(document.get("recipes", [])):
        where = f"recipes[{i}]"
        if not isinstance(r, dict) or not isinstance(r.get("id"), str) or not isinstance(r.get("text"), str):
            raise ParseError("recipe needs string fields id and text", path=where)
        threats = r.get("threats", [])
        for t in threats:
            if t not in THREAT_TYPES:
                raise ParseError(f"unknown threat type {t!r}", path=f"{where}.threats")
        scores = dict(r.get("effectiveness", {}))
        for t, s in scores.items():
            if isinstance(s, bool) or not isinstance(s, (int, float)) or not 0.0 <= s <= 1.0:
                raise ParseError(f"effectiveness for {t!r} must be within [0, 1]", path=f"{where}.effectiveness")
        try:
            recipe = parse_recipe(
                r["text"], r["id"], applicable_threats=frozenset(threats), effectiveness=MappingProxyType(scores)
            )
        except GrammarError as exc:
            raise GrammarError(f"recipe {r['id']!r}: {exc.reason}", exc.line, exc.column) from None
        book.append(recipe)
    return book


def select_recipe(
    threat_type: str,
    book: list[Recipe],
    mode: str = "auto",
    decide: Callable[[list[Recipe]], Recipe] | None = None,
) -> Recipe:
    """Highest effectiveness for the threat, ties broken by lexicographic id;
    ``manual`` mode lets ``decide`` choose among the applicable recipes."""
    applicable = sorted((r for r in book if threat_type in r.applicable_threats), key=lambda r: r.id)
    if not applicable:
        raise NoApplicableRecipe(f"no recipe applies to threat type {threat_type!r}", threat=threat_type)
    if mode == "manual":
        if decide is None:
            raise CapforgeError("manual selection needs a decision callback")
        choice = decide(applicable)
        if choice not in applicable:
            raise CapforgeError("decision is not one of the applicable recipes")
        return choice
    return min(applicable, key=lambda r: (-r.score(threat_type), r.id))
