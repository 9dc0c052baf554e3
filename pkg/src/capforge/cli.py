"""Command line entry point.

Exit status: 0 success, 1 validation or domain error, 2 usage error.
Every path flag can also be set through a ``CAPFORGE_`` environment variable
(``CAPFORGE_CATALOGUE``, ``CAPFORGE_LANDSCAPE``, ``CAPFORGE_MAPPING``,
``CAPFORGE_RECIPES``, ``CAPFORGE_STRATEGY``, ``CAPFORGE_HOST``, ``CAPFORGE_PORT``).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from collections.abc import Sequence

from . import payloads
from .catalogue import load_catalogue
from .errors import CapforgeError
from .fixtures import data_path, mlp_document
from .landscape import load_hlps, load_landscape
from .recipes import load_recipe_book
from .refine import load_mapping, refine
from .schema import schema_text

EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 1, 2
STRATEGY_FLAGS = ("min-controls", "defense-in-depth", "interactive")


class UsageError(Exception):
    pass


def _env(name: str, default: str | None = None) -> str | None:
    return os.environ.get(f"CAPFORGE_{name}", default)


def _attrs(pairs: Sequence[str]) -> dict[str, str]:
    out = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise UsageError(f"--attr expects k=v, got {pair!r}")
        out[key] = value
    return out


def _json_arg(value: str) -> dict:
    """A shipped MLP name, a JSON file path or ``-`` for stdin."""
    if value == "-":
        return json.loads(sys.stdin.read())
    return mlp_document(value)


def _emit(doc: object) -> None:
    sys.stdout.write(json.dumps(doc, indent=2, ensure_ascii=False) + "\n")


def _add_catalogue(p: argparse.ArgumentParser) -> None:
    p.add_argument("--catalogue", default=_env("CATALOGUE", str(data_path("catalogue.json"))), help="catalogue file or directory")


def _add_queries(sub, prefix: str = "") -> None:
    p = sub.add_parser("compare", help="relation between two NSFs")
    _add_catalogue(p)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p = sub.add_parser("substitute", aliases=["substitutes"], help="NSFs able to replace one NSF")
    _add_catalogue(p)
    p.add_argument("--nsf", required=True)
    p = sub.add_parser("search", help="NSFs owning every listed capability")
    _add_catalogue(p)
    p.add_argument("--caps", required=True, action="append", help="comma separated capability ids (repeatable)")
    p = sub.add_parser("enforcers", help="NSFs able to enforce an MLP")
    _add_catalogue(p)
    p.add_argument("--mlp", required=True, help="shipped MLP name, JSON path or - for stdin")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="capforge", description="Capability catalogue, policy refinement and translation")
    sub = parser.add_subparsers(dest="command", metavar="command")

    cat = sub.add_parser("catalogue", help="catalogue queries")
    cat_sub = cat.add_subparsers(dest="query", metavar="query")
    p = cat_sub.add_parser("validate", help="load and check a catalogue, or validate an MLP against an NSF")
    _add_catalogue(p)
    p.add_argument("--mlp")
    p.add_argument("--nsf")
    _add_queries(cat_sub)
    _add_queries(sub)

    p = sub.add_parser("langgen", help="emit the abstract language (JSON Schema) of an NSF")
    _add_catalogue(p)
    p.add_argument("--nsf", required=True)

    p = sub.add_parser("translate", help="translate an MLP into device configuration")
    _add_catalogue(p)
    p.add_argument("--nsf", required=True)
    p.add_argument("--mlp", required=True, help="shipped MLP name, JSON path or - for stdin")
    p.add_argument("--attr", action="append", default=[], metavar="K=V", help="policy attribute (repeatable)")
    p.add_argument("--auto-satisfy", action="store_true", help="inject single-valued dependencies")

    for name, helptext in (("refine", "refine HLPs over a landscape"), ("remediate", "run a remediation recipe")):
        p = sub.add_parser(name, help=helptext)
        _add_catalogue(p)
        default_land = "landscape_reference.json" if name == "refine" else "landscape_remediation.json"
        p.add_argument("--landscape", default=_env("LANDSCAPE", str(data_path(default_land))))
        p.add_argument("--mapping", default=_env("MAPPING", str(data_path("mapping.json"))))
        p.add_argument("--strategy", default=_env("STRATEGY", "min-controls"), choices=STRATEGY_FLAGS)
        if name == "refine":
            p.add_argument("--hlps", default=str(data_path("hlp_reference.json")))
        else:
            p.add_argument("--report", required=True, help="threat report JSON file")
            p.add_argument("--recipes", default=_env("RECIPES", str(data_path("recipes.json"))))
            p.add_argument("--recipe", help="recipe id (default: most effective)")
            p.add_argument("--share", action="store_true", help="print only the share report")

    p = sub.add_parser("serve", help="run the HTTP service")
    _add_catalogue(p)
    p.add_argument("--landscape", default=_env("LANDSCAPE", str(data_path("landscape_remediation.json"))))
    p.add_argument("--mapping", default=_env("MAPPING", str(data_path("mapping.json"))))
    p.add_argument("--recipes", default=_env("RECIPES", str(data_path("recipes.json"))))
    p.add_argument("--host", default=_env("HOST", "127.0.0.1"))
    p.add_argument("--port", type=int, default=int(_env("PORT", "8080")))
    return parser


def _terminal_decide(kind: str, choices: list) -> object:
    sys.stderr.write(f"choose a {kind}:\n")
    for i, c in enumerate(choices):
        label = getattr(c, "key", None) or (" + ".join(x.key for x in c) if isinstance(c, tuple) else str(c))
        sys.stderr.write(f"  [{i}] {label}\n")
    while True:
        sys.stderr.write("> ")
        sys.stderr.flush()
        answer = sys.stdin.readline()
        if not answer:
            raise UsageError("no answer given")
        if answer.strip().isdigit() and int(answer) < len(choices):
            return choices[int(answer)]


def _run(args: argparse.Namespace) -> int:
    command = args.command
    if command == "catalogue":
        command = args.query
        if command is None:
            raise UsageError("catalogue needs a query")
    catalogue = load_catalogue(args.catalogue)

    if command == "validate":
        if args.mlp is None:
            _emit({"valid": True, "nsfs": catalogue.nsf_ids})
            return EXIT_OK
        if args.nsf is None:
            raise UsageError("--mlp needs --nsf")
        doc = payloads.validate_payload(catalogue, args.nsf, _json_arg(args.mlp))
        _emit(doc)
        return EXIT_OK if doc["valid"] else EXIT_INVALID
    if command == "compare":
        _emit(payloads.compare_payload(catalogue, args.a, args.b))
    elif command in ("substitute", "substitutes"):
        _emit(payloads.substitute_payload(catalogue, args.nsf))
    elif command == "search":
        _emit(payloads.search_payload(catalogue, args.caps))
    elif command == "enforcers":
        _emit(payloads.enforcers_payload(catalogue, _json_arg(args.mlp)))
    elif command == "langgen":
        sys.stdout.write(schema_text(payloads.langgen_payload(catalogue, args.nsf)))
    elif command == "translate":
        text = payloads.translate_text(catalogue, args.nsf, _json_arg(args.mlp), _attrs(args.attr), args.auto_satisfy)
        sys.stdout.write(text)
    elif command == "refine":
        strategy = args.strategy.replace("-", "_")
        decide = None
        if strategy == "interactive":
            if not sys.stdin.isatty():
                raise UsageError("interactive refinement needs a terminal on stdin")
            decide = _terminal_decide
        landscape = load_landscape(args.landscape, catalogue)
        result = refine(load_hlps(args.hlps), landscape, catalogue, load_mapping(args.mapping), strategy, decide)
        _emit(payloads.refine_payload(result, catalogue))
    elif command == "remediate":
        strategy = args.strategy.replace("-", "_")
        if strategy == "interactive":
            raise UsageError("remediation runs with a non-interactive strategy")
        with open(args.report, encoding="utf-8") as fh:
            report = json.load(fh)
        doc = payloads.remediate_payload(
            report,
            load_recipe_book(args.recipes),
            load_landscape(args.landscape, catalogue),
            catalogue,
            load_mapping(args.mapping),
            args.recipe,
            strategy,
        )
        _emit(doc["shareReport"] if args.share else doc)
    elif command == "serve":
        import uvicorn

        from .service import create_app

        app = create_app(
            catalogue,
            recipe_book=load_recipe_book(args.recipes),
            mapping=load_mapping(args.mapping),
            landscape=load_landscape(args.landscape, catalogue),
        )
        uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        sys.stderr.write("capforge: error: a command is required\n")
        return EXIT_USAGE
    try:
        return _run(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"capforge: error: {exc}\n")
        return EXIT_USAGE
    except CapforgeError as exc:
        sys.stderr.write(json.dumps(exc.as_payload(), ensure_ascii=False) + "\n")
        return EXIT_INVALID
    except (OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(json.dumps({"code": "io-error", "message": str(exc), "detail": {}}) + "\n")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
