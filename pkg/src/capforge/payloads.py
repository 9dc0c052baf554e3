"""Response payloads shared by the CLI and the HTTP service, so both emit the same documents."""

from __future__ import annotations

from collections.abc import Iterable, Mapping

from . import catalogue as cat_ops
from .catalogue import Catalogue
from .errors import (
    CapforgeError,
    GrammarError,
    LiteralTypeError,
    MissingPrerequisite,
    ParseError,
    UnknownCapability,
    UnknownEntity,
    UnknownNsf,
    UnknownRecipe,
    UnknownSession,
    UnknownVerb,
)
from .landscape import Landscape
from .mlp import parse_mlp, validate_mlp
from .recipes import Recipe, select_recipe
from .refine import RefinementMapping, RefinementResult
from .remediate import emit_share_report, execute_recipe, parse_report
from .schema import emit_abstract_language
from .translator import translate

_STATUS = (
    ((ParseError, GrammarError, LiteralTypeError), 400),
    ((UnknownNsf, UnknownCapability, UnknownEntity, UnknownVerb, UnknownRecipe, UnknownSession), 404),
    ((MissingPrerequisite,), 409),
)


def http_status(exc: CapforgeError) -> int:
    for classes, status in _STATUS:
        if isinstance(exc, classes):
            return status
    return 422


def nsfs_payload(catalogue: Catalogue) -> dict:
    out = []
    for nid in catalogue.nsf_ids:
        r = catalogue.resolved(nid)
        out.append(
            {
                "id": nid,
                "deployable": r.deployable,
                "includes": list(catalogue.nsfs[nid].includes),
                "capabilities": sorted(r.capabilities),
            }
        )
    return {"nsfs": out}


def compare_payload(catalogue: Catalogue, a: str, b: str) -> dict:
    return cat_ops.compare(catalogue, a, b).to_doc(a, b)


def substitute_payload(catalogue: Catalogue, nsf: str) -> dict:
    return {"nsf": nsf, "substitutes": cat_ops.substitutes(catalogue, nsf)}


def split_caps(raw: Iterable[str]) -> list[str]:
    return [c.strip() for item in raw for c in item.split(",") if c.strip()]


def search_payload(catalogue: Catalogue, caps: Iterable[str]) -> dict:
    wanted = split_caps(caps)
    return {"capabilities": wanted, "nsfs": cat_ops.search(catalogue, wanted)}


def enforcers_payload(catalogue: Catalogue, mlp_doc: Mapping) -> dict:
    return {"enforcers": cat_ops.enforcers(catalogue, parse_mlp(mlp_doc))}


def translate_text(
    catalogue: Catalogue, nsf: str, mlp_doc: Mapping, attributes: Mapping[str, str] | None = None, auto_satisfy: bool = False
) -> str:
    resolved = catalogue.resolved(nsf)
    return translate(parse_mlp(mlp_doc), resolved, attributes, auto_satisfy_dependencies=auto_satisfy)


def validate_payload(catalogue: Catalogue, nsf: str, mlp_doc: Mapping) -> dict:
    diags = validate_mlp(parse_mlp(mlp_doc), catalogue.resolved(nsf))
    return {
        "nsf": nsf,
        "valid": not any(d.severity == "error" for d in diags),
        "diagnostics": [d.to_doc() for d in diags],
    }


def langgen_payload(catalogue: Catalogue, nsf: str) -> dict:
    return emit_abstract_language(catalogue.resolved(nsf))


def refine_payload(result: RefinementResult, catalogue: Catalogue) -> dict:
    doc = result.to_doc()
    llc = {}
    for key in sorted(result.mlps):
        policy = result.mlps[key]
        try:
            llc[key] = translate(policy, catalogue.resolved(policy.nsf_name))
        except CapforgeError as exc:
            llc[key] = exc.as_payload()
    doc["llc"] = llc
    return doc


def remediate_payload(
    report_doc: Mapping,
    book: list[Recipe],
    landscape: Landscape,
    catalogue: Catalogue,
    mapping: RefinementMapping,
    recipe_id: str | None = None,
    strategy: str = "min_controls",
) -> dict:
    report = parse_report(report_doc)
    if recipe_id is None:
        recipe = select_recipe(report.threat_type, book)
    else:
        recipe = next((r for r in book if r.id == recipe_id), None)
        if recipe is None:
            raise UnknownRecipe(f"unknown recipe {recipe_id!r}", recipe=recipe_id)
    plan = execute_recipe(recipe, report, landscape, catalogue, mapping, strategy)
    return {"plan": plan.to_doc(), "shareReport": emit_share_report(plan, report)}
