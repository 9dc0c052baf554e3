"""Capability and NSF data model, catalogue loading and catalogue queries."""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import TYPE_CHECKING

from .details import (
    NsfPolicyDetails,
    ResolutionStrategyDetails,
    TranslationDetails,
    policy_details_from_doc,
    resolution_details_from_doc,
    translation_details_from_doc,
)
from .errors import (
    CapforgeError,
    DanglingReference,
    IncludeCycle,
    InvalidPolicy,
    ParseError,
    UnknownCapability,
    UnknownNsf,
)
from .values import STRING_TYPES, VALUE_TYPES

if TYPE_CHECKING:
    from .mlp import MlpPolicy

KINDS = ("Condition", "Action", "Event", "Evaluation", "ResolutionStrategy", "DefaultAction")
OPERATORS = ("exactMatch", "notEqualTo", "range", "regex")

EQUIVALENT = "Equivalent"
DISJOINT = "Disjoint"
SUBSET_A_OF_B = "ProperSubsetAofB"
SUBSET_B_OF_A = "ProperSubsetBofA"
OVERLAPPING = "Overlapping"


@dataclass(frozen=True)
class CapabilityDescriptor:
    id: str
    kind: str
    value_type: str = "none"
    operators: tuple[str, ...] = ()
    enum_values: tuple[str, ...] = ()

    def to_doc(self) -> dict:
        doc: dict = {"id": self.id, "kind": self.kind, "valueType": self.value_type}
        if self.operators:
            doc["operators"] = list(self.operators)
        if self.enum_values:
            doc["enumValues"] = list(self.enum_values)
        return doc


@dataclass(frozen=True)
class NsfDescriptor:
    id: str
    capability_refs: frozenset[str] = frozenset()
    includes: tuple[str, ...] = ()
    policy_details: NsfPolicyDetails | None = None
    translation_details: Mapping[str, TranslationDetails] = field(default_factory=dict)
    resolution_strategy: str | None = None
    default_action_pool: frozenset[str] | None = None


@dataclass(frozen=True)
class ResolvedNsf:
    """An NSF with its includes flattened."""

    id: str
    capabilities: frozenset[str]
    descriptors: Mapping[str, CapabilityDescriptor]
    translation_details: Mapping[str, TranslationDetails]
    policy_details: NsfPolicyDetails | None
    resolution_strategy: str | None
    resolution_details: ResolutionStrategyDetails | None
    default_action_pool: frozenset[str]

    def of_kind(self, kind: str) -> list[str]:
        return sorted(c for c in self.capabilities if self.descriptors[c].kind == kind)

    @property
    def deployable(self) -> bool:
        return self.policy_details is not None

    @property
    def required_external_data(self) -> tuple:
        return self.resolution_details.required_external_data if self.resolution_details else ()


@dataclass(frozen=True)
class ComparisonResult:
    relation: str
    shared: frozenset[str]

    def to_doc(self, a: str, b: str) -> dict:
        return {"a": a, "b": b, "relation": self.relation, "shared": sorted(self.shared)}


class Catalogue:
    """Immutable container of capabilities, NSFs and resolution-strategy details."""

    def __init__(
        self,
        capabilities: Mapping[str, CapabilityDescriptor],
        nsfs: Mapping[str, NsfDescriptor],
        strategies: Mapping[str, ResolutionStrategyDetails],
    ) -> None:
        self.capabilities = MappingProxyType(dict(capabilities))
        self.nsfs = MappingProxyType(dict(nsfs))
        self.strategies = MappingProxyType(dict(strategies))
        _check_references(self)
        self._resolved = MappingProxyType({nid: _resolve(self, nid) for nid in sorted(self.nsfs)})
        for resolved in self._resolved.values():
            _check_resolved(self, resolved)

    @property
    def nsf_ids(self) -> list[str]:
        return sorted(self.nsfs)

    def resolved(self, nsf_id: str) -> ResolvedNsf:
        try:
            return self._resolved[nsf_id]
        except KeyError:
            raise UnknownNsf(f"unknown NSF {nsf_id!r}", nsf=nsf_id) from None

    def capability(self, cap_id: str) -> CapabilityDescriptor:
        try:
            return self.capabilities[cap_id]
        except KeyError:
            raise UnknownCapability(f"unknown capability {cap_id!r}", capability=cap_id) from None


# -- loading -----------------------------------------------------------------


def _read_json(path: Path) -> object:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=str(path), line=exc.lineno, column=exc.colno) from None


def _strings(value: object, path: str) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ParseError("expected a list of strings", path=path)
    return value


def _capability_from_doc(doc: object, path: str) -> CapabilityDescriptor:
    if not isinstance(doc, dict):
        raise ParseError("capability must be an object", path=path)
    cid = doc.get("id")
    if not isinstance(cid, str) or not cid:
        raise ParseError("capability id must be a non-empty string", path=f"{path}.id")
    kind = doc.get("kind")
    if kind not in KINDS:
        raise ParseError(f"kind must be one of {KINDS}", path=f"{path}.kind")
    vt = doc.get("valueType", "none")
    if vt not in VALUE_TYPES:
        raise ParseError(f"unknown valueType {vt!r}", path=f"{path}.valueType")
    ops = tuple(_strings(doc.get("operators", []), f"{path}.operators"))
    for op in ops:
        if op not in OPERATORS:
            raise ParseError(f"unknown operator {op!r}", path=f"{path}.operators")
    enum_values = tuple(_strings(doc.get("enumValues", []), f"{path}.enumValues"))
    if (kind == "Condition") != bool(ops):
        raise ParseError("operators must be non-empty exactly for Condition capabilities", path=f"{path}.operators")
    if vt == "none" and ops:
        raise ParseError("valueType none admits no operators", path=f"{path}.operators")
    if "regex" in ops and vt not in STRING_TYPES:
        raise ParseError("regex operator requires a string value type", path=f"{path}.operators")
    if "range" in ops and vt not in ("ipv4-address", "port-number", "integer"):
        raise ParseError("range operator requires an ordered value type", path=f"{path}.operators")
    if (vt == "enum") != bool(enum_values):
        raise ParseError("enumValues must be given exactly for enum value types", path=f"{path}.enumValues")
    return CapabilityDescriptor(cid, kind, vt, ops, enum_values)


def _nsf_from_doc(doc: object, path: str) -> NsfDescriptor:
    if not isinstance(doc, dict):
        raise ParseError("nsf must be an object", path=path)
    nid = doc.get("id")
    if not isinstance(nid, str) or not nid:
        raise ParseError("nsf id must be a non-empty string", path=f"{path}.id")
    details: dict[str, TranslationDetails] = {}
    raw_details = doc.get("translationDetails", [])
    if not isinstance(raw_details, list):
        raise ParseError("translationDetails must be a list", path=f"{path}.translationDetails")
    for i, d in enumerate(raw_details):
        td = translation_details_from_doc(d, f"{path}.translationDetails[{i}]")
        if td.capability in details:
            raise ParseError(f"duplicate translation details for {td.capability}", path=f"{path}.translationDetails[{i}]")
        details[td.capability] = td
    pool = doc.get("defaultActionPool")
    rs = doc.get("resolutionStrategy")
    if rs is not None and not isinstance(rs, str):
        raise ParseError("resolutionStrategy must be a string", path=f"{path}.resolutionStrategy")
    return NsfDescriptor(
        id=nid,
        capability_refs=frozenset(_strings(doc.get("capabilities", []), f"{path}.capabilities")),
        includes=tuple(_strings(doc.get("includes", []), f"{path}.includes")),
        policy_details=policy_details_from_doc(doc["policyDetails"], f"{path}.policyDetails")
        if "policyDetails" in doc
        else None,
        translation_details=MappingProxyType(details),
        resolution_strategy=rs,
        default_action_pool=frozenset(_strings(pool, f"{path}.defaultActionPool")) if pool is not None else None,
    )


def catalogue_from_docs(docs: Iterable[tuple[str, object]]) -> Catalogue:
    """Build a catalogue from ``(source-name, parsed-json)`` pairs."""
    capabilities: dict[str, CapabilityDescriptor] = {}
    nsfs: dict[str, NsfDescriptor] = {}
    strategies: dict[str, ResolutionStrategyDetails] = {}
    for source, doc in docs:
        if not isinstance(doc, dict):
            raise ParseError("catalogue document must be an object", path=source)
        for key in doc:
            if key not in ("capabilities", "nsfs", "resolutionStrategies", "description"):
                raise ParseError(f"unknown top-level field {key!r}", path=source)
        for i, c in enumerate(doc.get("capabilities", [])):
            cap = _capability_from_doc(c, f"{source}:capabilities[{i}]")
            if cap.id in capabilities:
                raise ParseError(f"duplicate capability id {cap.id!r}", path=f"{source}:capabilities[{i}]")
            capabilities[cap.id] = cap
        for i, r in enumerate(doc.get("resolutionStrategies", [])):
            rd = resolution_details_from_doc(r, f"{source}:resolutionStrategies[{i}]")
            strategies[rd.strategy_capability] = rd
        for i, n in enumerate(doc.get("nsfs", [])):
            nsf = _nsf_from_doc(n, f"{source}:nsfs[{i}]")
            if nsf.id in nsfs:
                raise ParseError(f"duplicate nsf id {nsf.id!r}", path=f"{source}:nsfs[{i}]")
            nsfs[nsf.id] = nsf
    return Catalogue(capabilities, nsfs, strategies)


def load_catalogue(document: str | Path | Mapping) -> Catalogue:
    """Load a catalogue from a parsed document, a JSON file, or a directory of JSON files."""
    if isinstance(document, Mapping):
        return catalogue_from_docs([("<document>", dict(document))])
    path = Path(document)
    if path.is_dir():
        files = sorted(path.glob("*.json"))
        return catalogue_from_docs((str(f), _read_json(f)) for f in files)
    if not path.exists():
        raise ParseError("catalogue file not found", path=str(path))
    return catalogue_from_docs([(str(path), _read_json(path))])


def _check_references(cat: Catalogue) -> None:
    for rd in cat.strategies.values():
        cap = cat.capabilities.get(rd.strategy_capability)
        if cap is None:
            raise DanglingReference(f"resolution strategy details name unknown capability {rd.strategy_capability!r}", missing=rd.strategy_capability)
    for nsf in cat.nsfs.values():
        for ref in sorted(nsf.capability_refs):
            if ref not in cat.capabilities:
                raise DanglingReference(f"NSF {nsf.id!r} references unknown capability {ref!r}", nsf=nsf.id, missing=ref)
        for inc in nsf.includes:
            if inc not in cat.nsfs:
                raise DanglingReference(f"NSF {nsf.id!r} includes unknown NSF {inc!r}", nsf=nsf.id, missing=inc)
    # Cycle detection by DFS with colouring; report the cycle path.
    state: dict[str, int] = {}
    stack: list[str] = []

    def visit(nid: str) -> None:
        state[nid] = 1
        stack.append(nid)
        for inc in cat.nsfs[nid].includes:
            if state.get(inc) == 1:
                raise IncludeCycle(stack[stack.index(inc):] + [inc])
            if inc not in state:
                visit(inc)
        stack.pop()
        state[nid] = 2

    for nid in sorted(cat.nsfs):
        if nid not in state:
            visit(nid)


def _include_order(cat: Catalogue, nsf_id: str) -> list[str]:
    """NSFs in the include closure, farthest first; the NSF itself is last."""
    depth: dict[str, tuple[int, int]] = {nsf_id: (0, 0)}
    frontier = [nsf_id]
    seq = 0
    d = 0
    while frontier:
        d += 1
        nxt = []
        for nid in frontier:
            for inc in cat.nsfs[nid].includes:
                if inc not in depth:
                    seq += 1
                    depth[inc] = (d, seq)
                    nxt.append(inc)
        frontier = nxt
    return sorted(depth, key=lambda n: (-depth[n][0], -depth[n][1]))


def _resolve(cat: Catalogue, nsf_id: str) -> ResolvedNsf:
    order = _include_order(cat, nsf_id)
    caps: set[str] = set()
    details: dict[str, TranslationDetails] = {}
    policy: NsfPolicyDetails | None = None
    strategy: str | None = None
    pool: frozenset[str] | None = None
    for nid in order:
        nsf = cat.nsfs[nid]
        caps |= nsf.capability_refs
        details.update(nsf.translation_details)
        if nsf.policy_details is not None:
            policy = nsf.policy_details
        if nsf.resolution_strategy is not None:
            strategy = nsf.resolution_strategy
        if nsf.default_action_pool is not None:
            pool = nsf.default_action_pool
    if strategy is None:
        owned = [c for c in caps if cat.capabilities[c].kind == "ResolutionStrategy"]
        if len(owned) == 1:
            strategy = owned[0]
    actions = frozenset(c for c in caps if cat.capabilities[c].kind == "Action")
    if pool is None:
        has_default = any(cat.capabilities[c].kind == "DefaultAction" for c in caps)
        pool = actions if has_default else frozenset()
    return ResolvedNsf(
        id=nsf_id,
        capabilities=frozenset(caps),
        descriptors=MappingProxyType({c: cat.capabilities[c] for c in caps}),
        translation_details=MappingProxyType(details),
        policy_details=policy,
        resolution_strategy=strategy,
        resolution_details=cat.strategies.get(strategy) if strategy else None,
        default_action_pool=pool,
    )


def _check_resolved(cat: Catalogue, r: ResolvedNsf) -> None:
    def dangling(what: str, ref: str) -> DanglingReference:
        return DanglingReference(f"NSF {r.id!r}: {what} {ref!r} is not among its capabilities", nsf=r.id, missing=ref)

    for cap in sorted(r.translation_details):
        if cap not in r.capabilities:
            raise dangling("translation details for", cap)
        for dep in r.translation_details[cap].dependencies:
            if dep.of_capability not in r.capabilities:
                raise dangling("dependency target", dep.of_capability)
    if r.resolution_strategy is not None:
        if r.resolution_strategy not in r.capabilities:
            raise dangling("resolution strategy", r.resolution_strategy)
        if cat.capabilities[r.resolution_strategy].kind != "ResolutionStrategy":
            raise ParseError(f"NSF {r.id!r}: {r.resolution_strategy} is not a ResolutionStrategy capability", path=r.id)
    for a in sorted(r.default_action_pool):
        if a not in r.capabilities or cat.capabilities[a].kind != "Action":
            raise dangling("default action", a)
    if r.policy_details is not None:
        for m in r.policy_details.mandatory_capabilities:
            if m not in r.capabilities:
                raise dangling("mandatory capability", m)
    groups: dict[str, list] = {}
    for td in r.translation_details.values():
        if td.merge_group is not None:
            groups.setdefault(td.merge_group.group_id, []).append(td.merge_group)
    for gid, members in groups.items():
        slots = sorted(m.slot for m in members)
        if slots != list(range(1, len(members) + 1)):
            raise ParseError(f"NSF {r.id!r}: merge group {gid!r} slots must be 1..{len(members)}", path=r.id)
        templates = {m.template for m in members if m.template}
        if len(templates) != 1:
            raise ParseError(f"NSF {r.id!r}: merge group {gid!r} needs exactly one template", path=r.id)
        template = templates.pop()
        for slot in slots:
            if "{" + str(slot) + "}" not in template:
                raise ParseError(f"NSF {r.id!r}: merge group {gid!r} template lacks slot {{{slot}}}", path=r.id)


# -- queries -----------------------------------------------------------------


def resolve_nsf(catalogue: Catalogue, nsf_id: str) -> ResolvedNsf:
    return catalogue.resolved(nsf_id)


def relation_of(a: frozenset[str], b: frozenset[str]) -> str:
    if a == b:
        return EQUIVALENT
    shared = a & b
    if not shared:
        return DISJOINT
    if shared == a:
        return SUBSET_A_OF_B
    if shared == b:
        return SUBSET_B_OF_A
    return OVERLAPPING


def compare(catalogue: Catalogue, a: str, b: str) -> ComparisonResult:
    sa = catalogue.resolved(a).capabilities
    sb = catalogue.resolved(b).capabilities
    return ComparisonResult(relation_of(sa, sb), sa & sb)


def substitutes(catalogue: Catalogue, nsf_id: str) -> list[str]:
    """Other NSFs owning at least every capability of ``nsf_id``."""
    own = catalogue.resolved(nsf_id).capabilities
    return [n for n in catalogue.nsf_ids if n != nsf_id and catalogue.resolved(n).capabilities >= own]


def search(catalogue: Catalogue, capability_ids: Iterable[str]) -> list[str]:
    wanted = list(capability_ids)
    if not wanted:
        raise CapforgeError("capability list must not be empty")
    for c in wanted:
        catalogue.capability(c)
    need = frozenset(wanted)
    return [n for n in catalogue.nsf_ids if catalogue.resolved(n).capabilities >= need]


def policy_requirements(policy: MlpPolicy) -> frozenset[str]:
    caps = set()
    for rule in policy.rules:
        caps.update(c.capability for c in rule.conditions)
        caps.update(a.capability for a in rule.actions)
    if policy.default_action is not None:
        caps.add(policy.default_action.capability)
    return frozenset(caps)


def can_enforce(resolved: ResolvedNsf, policy: MlpPolicy) -> bool:
    if not resolved.capabilities >= policy_requirements(policy):
        return False
    if policy.default_action is not None and policy.default_action.capability not in resolved.default_action_pool:
        return False
    evaluations = set(resolved.of_kind("Evaluation"))
    for rule in policy.rules:
        if rule.evaluation != "AllOf" and f"{rule.evaluation}EvaluationCapability" not in evaluations:
            return False
        for spec in resolved.required_external_data:
            if spec.name not in rule.external_data:
                return False
    return True


def enforcers(catalogue: Catalogue, policy: MlpPolicy | Mapping) -> list[str]:
    """NSFs able to enforce ``policy``: they own every capability it instantiates,
    admit its default action, its evaluation modes, and find the external data
    their resolution strategy needs in every rule."""
    if isinstance(policy, Mapping):
        from .mlp import parse_mlp

        try:
            policy = parse_mlp(policy)
        except (ParseError, TypeError) as exc:
            raise InvalidPolicy(str(exc)) from exc
    return [n for n in catalogue.nsf_ids if can_enforce(catalogue.resolved(n), policy)]
