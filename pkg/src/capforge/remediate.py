"""Threat reports, recipe execution into remediation plans, and share reports."""

from __future__ import annotations

import ipaddress
import json
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

from .catalogue import Catalogue
from .errors import CapforgeError, NoCapableNsfInCatalogue, ParseError, UnboundVariable
from .landscape import ANY, Hlp, Landscape, node_cut, node_paths
from .mlp import MlpPolicy
from .recipes import THREAT_TYPES, Ban, DeployNsf, FilterL4, FilterL7, IsolateHost, Recipe, Step, Var
from .refine import HlpResult, RefinementMapping, _placement, refine, refine_one

# recipe variable -> report field
BINDINGS = {
    "attacker": "attacker_addresses",
    "victim": "impacted_hosts",
    "ports": "ports",
    "urls": "url_patterns",
    "wallets": "wallet_ids",
    "dids": "distributed_ids",
}
_REPORT_KEYS = {
    "threatType": "threat_type",
    "impactedHosts": "impacted_hosts",
    "attackerAddresses": "attacker_addresses",
    "ports": "ports",
    "urlPatterns": "url_patterns",
    "walletIds": "wallet_ids",
    "distributedIds": "distributed_ids",
}
DENY_L4 = "is_not_authorized_to_access"
DENY_L7 = "is_not_authorized_to_browse"
ALLOW_L7 = "is_authorized_to_browse"
BAN = "ban_identities"


@dataclass(frozen=True)
class ThreatReport:
    threat_type: str
    impacted_hosts: tuple[str, ...] = ()
    attacker_addresses: tuple[str, ...] = ()
    ports: tuple[int, ...] = ()
    url_patterns: tuple[str, ...] = ()
    wallet_ids: tuple[str, ...] = ()
    distributed_ids: tuple[str, ...] = ()

    def to_doc(self) -> dict:
        doc: dict = {}
        for key, attr in _REPORT_KEYS.items():
            value = getattr(self, attr)
            if value:
                doc[key] = list(value) if isinstance(value, tuple) else value
        return doc


def parse_report(document: Mapping | str | Path) -> ThreatReport:
    if isinstance(document, str) and document.lstrip().startswith("{"):
        document = json.loads(document)
    if not isinstance(document, Mapping):
        path = Path(document)
        try:
            document = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ParseError("threat report not found", path=str(path)) from None
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, path=str(path), line=exc.lineno, column=exc.colno) from None
    extra = set(document) - set(_REPORT_KEYS)
    if extra:
        raise ParseError(f"unknown field {sorted(extra)[0]!r}", path="report")
    if document.get("threatType") not in THREAT_TYPES:
        raise ParseError(f"threatType must be one of {', '.join(THREAT_TYPES)}", path="report.threatType")
    fields: dict = {"threat_type": document["threatType"]}
    for key, attr in _REPORT_KEYS.items():
        if key == "threatType" or key not in document:
            continue
        raw = document[key]
        if not isinstance(raw, list):
            raise ParseError(f"{key} must be a list", path=f"report.{key}")
        if key == "ports":
            if not all(isinstance(p, int) and not isinstance(p, bool) and 0 <= p <= 65535 for p in raw):
                raise ParseError("ports must be integers within 0..65535", path="report.ports")
        elif not all(isinstance(x, str) and x for x in raw):
            raise ParseError(f"{key} must hold non-empty strings", path=f"report.{key}")
        if key == "attackerAddresses":
            for a in raw:
                try:
                    ipaddress.IPv4Network(a, strict=False)
                except ValueError:
                    raise ParseError(f"malformed attacker address {a!r}", path="report.attackerAddresses") from None
        fields[attr] = tuple(raw)
    if not fields.get("impacted_hosts") and not fields.get("attacker_addresses"):
        raise ParseError("a report names impacted hosts or attacker addresses", path="report")
    return ThreatReport(**fields)


@dataclass(frozen=True)
class LandscapeChange:
    kind: str
    node: str
    nsf: str | None = None

    def to_doc(self) -> dict:
        doc: dict = {"change": self.kind, "node": self.node}
        if self.nsf is not None:
            doc["nsf"] = self.nsf
        return doc


@dataclass
class RemediationPlan:
    recipe_id: str
    recipe_text: str
    strategy: str
    hlps: list[Hlp] = field(default_factory=list)
    landscape_changes: list[LandscapeChange] = field(default_factory=list)
    mlps: dict[str, MlpPolicy] = field(default_factory=dict)
    unresolved: list[dict] = field(default_factory=list)
    results: list[HlpResult] = field(default_factory=list)
    capabilities: frozenset[str] = frozenset()
    landscape: Landscape | None = None

    def to_doc(self) -> dict:
        return {
            "recipeId": self.recipe_id,
            "hlps": [h.to_doc() for h in self.hlps],
            "landscapeChanges": [c.to_doc() for c in self.landscape_changes],
            "mlps": {k: self.mlps[k].to_doc() for k in sorted(self.mlps)},
            "unresolved": list(self.unresolved),
        }


def step_doc(step: Step) -> dict:
    doc: dict = {"step": type(step).__name__}
    for name, value in vars(step).items():
        if value is None:
            continue
        doc[name] = str(value) if isinstance(value, Var) else list(value) if isinstance(value, tuple) else value
    return doc


def _bind(arg, report: ThreatReport) -> list:
    """A literal is a one-element list; a variable yields the bound report field."""
    if isinstance(arg, Var):
        values = getattr(report, BINDINGS[arg.name])
        if not values:
            raise UnboundVariable(f"${arg.name} is not bound by the report", variable=arg.name)
        return list(values)
    if isinstance(arg, tuple):
        return list(arg)
    return [arg]


def _check_bindings(recipe: Recipe, report: ThreatReport) -> None:
    for step in recipe.steps:
        for value in vars(step).values():
            if isinstance(value, Var):
                _bind(value, report)


def _ports(raw: list) -> list[int | str]:
    return [int(p) if isinstance(p, str) and p.isdigit() else p for p in raw]


def step_hlps(step: Step, report: ThreatReport) -> list[Hlp]:
    if isinstance(step, FilterL4):
        options: dict = {}
        if step.proto is not None:
            options["protocol"] = _bind(step.proto, report)[0]
        if step.ports is not None:
            options["ports"] = _ports(_bind(step.ports, report))
        return [Hlp(s, DENY_L4, d, dict(options)) for s in _bind(step.src, report) for d in _bind(step.dst, report)]
    if isinstance(step, FilterL7):
        verb = DENY_L7 if step.decision == "deny" else ALLOW_L7
        urls = _bind(step.url, report)
        hosts = list(report.impacted_hosts) or [ANY]
        return [Hlp(h, verb, ANY, {"url_pattern": urls}) for h in hosts]
    if isinstance(step, IsolateHost):
        out = []
        for host in _bind(step.host, report):
            out.append(Hlp(host, DENY_L4, ANY))
            out.append(Hlp(ANY, DENY_L4, host))
        return out
    if isinstance(step, Ban):
        option = "wallet_ids" if step.id_kind == "wallet" else "distributed_ids"
        return [Hlp(ANY, BAN, ANY, {option: _bind(step.ids, report)})]
    return []


def _deploy(step: DeployNsf, report: ThreatReport, landscape: Landscape, catalogue: Catalogue) -> list[LandscapeChange]:
    required = frozenset(_bind(step.capabilities, report))
    for cap in required:
        catalogue.capability(cap)
    capable = [n for n in catalogue.nsf_ids if catalogue.resolved(n).deployable and catalogue.resolved(n).capabilities >= required]
    if not capable:
        raise NoCapableNsfInCatalogue(f"no catalogue NSF owns {', '.join(sorted(required))}", required=sorted(required))
    changes = []
    for near in _bind(step.near, report):
        dst = landscape.resolve(near).node
        src = landscape.boundary if landscape.boundary is not None else dst
        path = node_paths(landscape, src, dst)[0]
        installed = any(
            catalogue.resolved(nsf).deployable and catalogue.resolved(nsf).capabilities >= required
            for node in path
            for nsf in landscape.nodes[node].nsfs
        )
        if installed:
            continue
        changes.append(LandscapeChange("add_nsf", _placement(landscape, path, node_cut(landscape, src, dst)), capable[0]))
    return changes


def execute_recipe(
    recipe: Recipe,
    report: ThreatReport,
    landscape: Landscape,
    catalogue: Catalogue,
    mapping: RefinementMapping,
    strategy: str = "min_controls",
) -> RemediationPlan:
    """Run the steps in order.  A statement no installed control can enforce
    gets the first proposed NSF added to the landscape and is refined again;
    the plan's MLPs are then refined once more over the final landscape."""
    _check_bindings(recipe, report)
    plan = RemediationPlan(recipe.id, recipe.text, strategy)
    current = landscape
    caps: set[str] = set()
    for index, step in enumerate(recipe.steps):
        try:
            if isinstance(step, DeployNsf):
                changes = _deploy(step, report, current, catalogue)
                caps |= set(_bind(step.capabilities, report))
                for change in changes:
                    current = current.with_nsf(change.node, change.nsf)
                plan.landscape_changes.extend(changes)
                continue
            hlps = step_hlps(step, report)
        except UnboundVariable:
            raise
        except CapforgeError as exc:
            plan.unresolved.append({"step": index, "detail": step_doc(step), "reason": exc.as_payload()})
            continue
        for hlp in hlps:
            priority = len(plan.hlps) + 1
            plan.hlps.append(hlp)
            result = refine_one(hlp, priority, current, catalogue, mapping, strategy)
            if result.status == "unenforceable_with_proposal":
                first = result.proposals[0]
                current = current.with_nsf(first.node, first.nsf)
                plan.landscape_changes.append(LandscapeChange("add_nsf", first.node, first.nsf))
    final = refine(plan.hlps, current, catalogue, mapping, strategy)
    plan.results = final.results
    plan.mlps = final.mlps
    plan.landscape = current
    for res in final.results:
        caps |= res.required
        if res.status != "enforced":
            reason = res.error.as_payload() if res.error else {"code": res.status}
            plan.unresolved.append({"hlp": res.hlp.to_doc(), "status": res.status, "reason": reason})
    plan.capabilities = frozenset(caps)
    return plan


def emit_share_report(plan: RemediationPlan, report: ThreatReport) -> dict:
    """Exportable remediation summary with a fixed field order."""
    actions = []
    for key in sorted(plan.mlps):
        node, nsf = key.split(":", 1)
        actions.append({"node": node, "nsf": nsf, "policy": plan.mlps[key].to_doc()})
    constraints = [f"deploy {c.nsf} on {c.node}" for c in plan.landscape_changes if c.kind == "add_nsf"]
    for item in plan.unresolved:
        reason = item["reason"]
        constraints.append(f"{reason.get('code')}: {reason.get('message', '')}".rstrip(": "))
    return {
        "recipe": {"id": plan.recipe_id, "text": plan.recipe_text},
        "threat": report.to_doc(),
        "capabilities": sorted(plan.capabilities),
        "actions": actions,
        "deploymentParameters": {
            "strategy": plan.strategy,
            "landscapeChanges": [c.to_doc() for c in plan.landscape_changes],
            "policies": [h.to_doc() for h in plan.hlps],
        },
        "enablingConstraints": constraints,
    }


def share_report_text(document: Mapping) -> str:
    return json.dumps(document, indent=2, ensure_ascii=False) + "\n"


__all__ = [
    "LandscapeChange",
    "RemediationPlan",
    "ThreatReport",
    "emit_share_report",
    "execute_recipe",
    "parse_report",
    "share_report_text",
    "step_hlps",
]
