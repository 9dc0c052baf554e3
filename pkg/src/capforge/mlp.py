"""Abstract per-NSF policies (MLPs): model, document I/O, validation and matching.

An MLP rule is evaluated with one of two modes: ``AllOf`` (every condition
holds) or ``AnyOf`` (at least one holds).  ``DNF`` and ``CNF`` are accepted
as input aliases of ``AllOf`` and ``AnyOf`` respectively.
"""

from __future__ import annotations

import json
import re
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

from .catalogue import ResolvedNsf
from .errors import LiteralTypeError, MissingAttribute, ParseError
from .values import Range, Single, Value, parse_value, range_conforms, single_conforms, value_matches

OPERATIONS = ("EQUAL", "NOT_EQUAL_TO", "REGEX")
OPERATION_OPERATOR = {"EQUAL": "exactMatch", "NOT_EQUAL_TO": "notEqualTo", "REGEX": "regex"}
EVALUATIONS = ("AllOf", "AnyOf")
EVALUATION_ALIASES = {"AllOf": "AllOf", "AnyOf": "AnyOf", "DNF": "AllOf", "CNF": "AnyOf"}

_POLICY_FIELDS = {"nsfName", "attributes", "rules", "defaultAction"}
_RULE_FIELDS = {"id", "ruleType", "description", "label", "externalData", "conditions", "actions", "evaluation"}
_INTEGER_TEXT = re.compile(r"^-?[0-9]+$")

Packet = Mapping[str, object]


@dataclass(frozen=True)
class ConditionInstance:
    capability: str
    operation: str
    values: tuple[Value, ...]

    def to_doc(self) -> dict:
        return {"capability": self.capability, "operation": self.operation, "values": [v.to_doc() for v in self.values]}


@dataclass(frozen=True)
class ActionInstance:
    capability: str
    value: Union[str, int, None] = None

    def to_doc(self) -> dict:
        doc: dict = {"capability": self.capability}
        if self.value is not None:
            doc["value"] = self.value
        return doc


@dataclass(frozen=True)
class MlpRule:
    id: str
    conditions: tuple[ConditionInstance, ...] = ()
    actions: tuple[ActionInstance, ...] = ()
    external_data: Mapping[str, str] = field(default_factory=dict)
    evaluation: str = "AllOf"
    description: str | None = None
    label: str | None = None
    rule_type: str | None = None

    def to_doc(self) -> dict:
        doc: dict = {"id": self.id}
        for key, value in (("ruleType", self.rule_type), ("description", self.description), ("label", self.label)):
            if value is not None:
                doc[key] = value
        if self.external_data:
            doc["externalData"] = dict(self.external_data)
        if self.evaluation != "AllOf":
            doc["evaluation"] = self.evaluation
        doc["conditions"] = [c.to_doc() for c in self.conditions]
        doc["actions"] = [a.to_doc() for a in self.actions]
        return doc


@dataclass(frozen=True)
class MlpPolicy:
    nsf_name: str
    rules: tuple[MlpRule, ...] = ()
    policy_attributes: Mapping[str, str] = field(default_factory=dict)
    default_action: ActionInstance | None = None

    def to_doc(self) -> dict:
        doc: dict = {"nsfName": self.nsf_name}
        if self.policy_attributes:
            doc["attributes"] = dict(self.policy_attributes)
        doc["rules"] = [r.to_doc() for r in self.rules]
        if self.default_action is not None:
            doc["defaultAction"] = self.default_action.to_doc()
        return doc


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # error | warning
    code: str
    message: str
    rule_id: str | None = None
    capability: str | None = None

    def to_doc(self) -> dict:
        return {
            "severity": self.severity,
            "code": self.code,
            "message": self.message,
            "rule": self.rule_id,
            "capability": self.capability,
        }


@dataclass(frozen=True)
class Outcome:
    """Result of evaluating a policy against one packet."""

    kind: str  # rule | default | NoDecision
    actions: tuple[ActionInstance, ...] = ()
    rule_id: str | None = None

    @property
    def action_ids(self) -> frozenset[str]:
        return frozenset(a.capability for a in self.actions)


NO_DECISION = Outcome("NoDecision")


# -- parsing -----------------------------------------------------------------


def _obj(value: object, path: str, allowed: set[str] | None = None) -> dict:
    if not isinstance(value, dict):
        raise ParseError("expected an object", path=path)
    if allowed is not None:
        extra = sorted(set(value) - allowed)
        if extra:
            raise ParseError(f"unknown field {extra[0]!r}", path=path)
    return value


def _opt_str(doc: dict, key: str, path: str) -> str | None:
    value = doc.get(key)
    if value is not None and not isinstance(value, str):
        raise ParseError(f"{key} must be a string", path=f"{path}.{key}")
    return value


def _req_str(doc: dict, key: str, path: str) -> str:
    value = doc.get(key)
    if not isinstance(value, str):
        raise ParseError(f"{key} must be a string", path=f"{path}.{key}")
    return value


def _action(doc: object, path: str) -> ActionInstance:
    doc = _obj(doc, path, {"capability", "value"})
    value = doc.get("value")
    if value is not None and (isinstance(value, bool) or not isinstance(value, (str, int))):
        raise LiteralTypeError(f"{path}.value: {value!r} is not a valid literal")
    return ActionInstance(_req_str(doc, "capability", path), value)


def _condition(doc: object, path: str) -> ConditionInstance:
    doc = _obj(doc, path, {"capability", "operation", "values"})
    op = _req_str(doc, "operation", path)
    if op not in OPERATIONS:
        raise ParseError(f"operation must be one of {OPERATIONS}", path=f"{path}.operation")
    raw = doc.get("values")
    if not isinstance(raw, list) or not raw:
        raise ParseError("values must be a non-empty list", path=f"{path}.values")
    values = tuple(parse_value(v, f"{path}.values[{i}]") for i, v in enumerate(raw))
    return ConditionInstance(_req_str(doc, "capability", path), op, values)


def _rule(doc: object, path: str) -> MlpRule:
    doc = _obj(doc, path, _RULE_FIELDS)
    ext = _obj(doc.get("externalData", {}), f"{path}.externalData")
    external: dict[str, str] = {}
    for k, v in ext.items():
        if isinstance(v, bool) or not isinstance(v, (str, int)):
            raise ParseError("external data values must be strings", path=f"{path}.externalData.{k}")
        external[k] = str(v)
    evaluation = doc.get("evaluation", "AllOf")
    if evaluation not in EVALUATION_ALIASES:
        raise ParseError(f"evaluation must be one of {sorted(EVALUATION_ALIASES)}", path=f"{path}.evaluation")
    conds = doc.get("conditions", [])
    acts = doc.get("actions", [])
    if not isinstance(conds, list) or not isinstance(acts, list):
        raise ParseError("conditions and actions must be lists", path=path)
    return MlpRule(
        id=_req_str(doc, "id", path),
        conditions=tuple(_condition(c, f"{path}.conditions[{i}]") for i, c in enumerate(conds)),
        actions=tuple(_action(a, f"{path}.actions[{i}]") for i, a in enumerate(acts)),
        external_data=external,
        evaluation=EVALUATION_ALIASES[evaluation],
        description=_opt_str(doc, "description", path),
        label=_opt_str(doc, "label", path),
        rule_type=_opt_str(doc, "ruleType", path),
    )


def parse_mlp(document: Mapping | str) -> MlpPolicy:
    """Parse an MLP document (a mapping or JSON text) without catalogue knowledge."""
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, path="policy", line=exc.lineno, column=exc.colno) from None
    doc = _obj(document, "policy", _POLICY_FIELDS)
    attrs = _obj(doc.get("attributes", {}), "policy.attributes")
    if not all(isinstance(v, str) for v in attrs.values()):
        raise ParseError("attribute values must be strings", path="policy.attributes")
    rules = doc.get("rules", [])
    if not isinstance(rules, list):
        raise ParseError("rules must be a list", path="policy.rules")
    default = doc.get("defaultAction")
    return MlpPolicy(
        nsf_name=_req_str(doc, "nsfName", "policy"),
        rules=tuple(_rule(r, f"policy.rules[{i}]") for i, r in enumerate(rules)),
        policy_attributes=dict(attrs),
        default_action=_action(default, "policy.defaultAction") if default is not None else None,
    )


def load_mlp(path: str | Path) -> MlpPolicy:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read MLP: {exc.strerror}", path=str(path)) from None
    return parse_mlp(text)


def serialize_mlp(policy: MlpPolicy) -> str:
    return json.dumps(policy.to_doc(), indent=2) + "\n"


# -- validation --------------------------------------------------------------


def _instances(rule: MlpRule):
    yield from rule.conditions
    yield from rule.actions


def dependency_violations(rule: MlpRule, resolved: ResolvedNsf) -> list[tuple[str, object]]:
    """``(dependent capability, Dependency)`` pairs not satisfied by ``rule``."""
    present: dict[str, list] = {}
    for inst in _instances(rule):
        present.setdefault(inst.capability, []).append(inst)
    problems = []
    for cap in dict.fromkeys(i.capability for i in _instances(rule)):
        details = resolved.translation_details.get(cap)
        if details is None:
            continue
        for dep in details.dependencies:
            targets = present.get(dep.of_capability, [])
            if dep.mode == "absence":
                if targets:
                    problems.append((cap, dep))
                continue
            if not targets:
                problems.append((cap, dep))
            elif dep.required_value and not any(_satisfies(t, dep.required_value) for t in targets):
                problems.append((cap, dep))
    return problems


def _satisfies(instance, allowed: tuple[str, ...]) -> bool:
    wanted = {a.casefold() for a in allowed}
    if isinstance(instance, ActionInstance):
        return instance.value is not None and str(instance.value).casefold() in wanted
    if instance.operation != "EQUAL":
        return False
    return all(isinstance(v, Single) and str(v.value).casefold() in wanted for v in instance.values)


def _value_diagnostics(cond: ConditionInstance, desc, rule_id: str) -> list[Diagnostic]:
    out = []
    for v in cond.values:
        if isinstance(v, Range):
            if "range" not in desc.operators:
                out.append(Diagnostic("error", "range-not-permitted", f"{cond.capability} does not accept ranges", rule_id, cond.capability))
            elif not range_conforms(v, desc.value_type):
                out.append(Diagnostic("error", "value-type", f"range {v.render()} does not conform to {desc.value_type}", rule_id, cond.capability))
        elif not single_conforms(v.value, desc.value_type, desc.enum_values):
            out.append(Diagnostic("error", "value-type", f"{v.value!r} does not conform to {desc.value_type}", rule_id, cond.capability))
        elif cond.operation == "REGEX":
            try:
                re.compile(str(v.value))
            except re.error as exc:
                out.append(Diagnostic("error", "value-type", f"invalid regex {v.value!r}: {exc}", rule_id, cond.capability))
    return out


def _action_diagnostics(act: ActionInstance, resolved: ResolvedNsf, rule_id: str | None) -> list[Diagnostic]:
    desc = resolved.descriptors.get(act.capability)
    if desc is None:
        return [Diagnostic("error", "unowned-capability", f"{act.capability} is not owned by {resolved.id}", rule_id, act.capability)]
    if desc.kind != "Action":
        return [Diagnostic("error", "wrong-kind", f"{act.capability} is a {desc.kind} capability, not an action", rule_id, act.capability)]
    if desc.value_type == "none":
        if act.value is not None:
            return [Diagnostic("error", "action-value", f"{act.capability} takes no value", rule_id, act.capability)]
        return []
    if act.value is None:
        return [Diagnostic("error", "action-value", f"{act.capability} requires a {desc.value_type} value", rule_id, act.capability)]
    if not single_conforms(act.value, desc.value_type, desc.enum_values):
        return [Diagnostic("error", "value-type", f"{act.value!r} does not conform to {desc.value_type}", rule_id, act.capability)]
    return []


def validate_mlp(policy: MlpPolicy, resolved_nsf: ResolvedNsf) -> list[Diagnostic]:
    """Check an MLP against what an NSF can express; an empty list means valid."""
    r = resolved_nsf
    diags: list[Diagnostic] = []
    if policy.nsf_name != r.id:
        diags.append(Diagnostic("warning", "nsf-mismatch", f"policy is written for {policy.nsf_name}, validated against {r.id}"))
    required_attrs = r.policy_details.policy_attributes if r.policy_details else ()
    for attr in required_attrs:
        if attr not in policy.policy_attributes:
            diags.append(Diagnostic("error", "missing-policy-attribute", f"policy attribute {attr!r} is required"))
    if policy.default_action is not None:
        da = policy.default_action
        diags.extend(_action_diagnostics(da, r, None))
        if da.capability in r.capabilities and da.capability not in r.default_action_pool:
            diags.append(Diagnostic("error", "default-action-not-allowed", f"{da.capability} cannot be a default action", None, da.capability))
    evaluations = set(r.of_kind("Evaluation"))
    mandatory = r.policy_details.mandatory_capabilities if r.policy_details else ()
    for rule in policy.rules:
        rid = rule.id
        if rule.evaluation != "AllOf" and f"{rule.evaluation}EvaluationCapability" not in evaluations:
            diags.append(Diagnostic("error", "evaluation-not-supported", f"{r.id} does not support {rule.evaluation} evaluation", rid))
        for spec in r.required_external_data:
            if spec.name not in rule.external_data:
                diags.append(Diagnostic("error", "missing-external-data", f"external data {spec.name!r} is required", rid))
            elif spec.value_type == "integer" and not _INTEGER_TEXT.match(rule.external_data[spec.name]):
                diags.append(Diagnostic("error", "external-data-type", f"external data {spec.name!r} must be an integer", rid))
        if not rule.actions:
            diags.append(Diagnostic("error", "no-action", "rule has no action", rid))
        for cond in rule.conditions:
            desc = r.descriptors.get(cond.capability)
            if desc is None:
                diags.append(Diagnostic("error", "unowned-capability", f"{cond.capability} is not owned by {r.id}", rid, cond.capability))
                continue
            if desc.kind != "Condition":
                diags.append(Diagnostic("error", "wrong-kind", f"{cond.capability} is a {desc.kind} capability, not a condition", rid, cond.capability))
                continue
            if OPERATION_OPERATOR[cond.operation] not in desc.operators:
                diags.append(Diagnostic("error", "operation-not-permitted", f"{cond.operation} is not permitted on {cond.capability}", rid, cond.capability))
            diags.extend(_value_diagnostics(cond, desc, rid))
        for act in rule.actions:
            diags.extend(_action_diagnostics(act, r, rid))
        used = {i.capability for i in _instances(rule)}
        for m in mandatory:
            if m not in used:
                diags.append(Diagnostic("error", "mandatory-capability-absent", f"mandatory capability absent: {m}", rid, m))
        for cap, dep in dependency_violations(rule, r):
            diags.append(Diagnostic("error", "dependency-violation", f"{cap} requires {dep.describe()}", rid, cap))
        order = [c.capability for c in rule.conditions]
        for cap in dict.fromkeys(order):
            details = r.translation_details.get(cap)
            if details is None:
                continue
            for dep in details.dependencies:
                if dep.mode == "presence" and dep.of_capability in order and order.index(dep.of_capability) > order.index(cap):
                    diags.append(Diagnostic("warning", "dependency-order", f"{dep.of_capability} appears after its dependent {cap}", rid, cap))
    return diags


def errors_only(diags: list[Diagnostic], *, skip: tuple[str, ...] = ()) -> list[Diagnostic]:
    return [d for d in diags if d.severity == "error" and d.code not in skip]


# -- matching ----------------------------------------------------------------


def match_condition(cond: ConditionInstance, packet: Packet) -> bool:
    if cond.capability not in packet:
        raise MissingAttribute(f"packet has no value for {cond.capability}", capability=cond.capability)
    observed = packet[cond.capability]
    if cond.operation == "REGEX":
        return any(re.search(str(v.value), str(observed)) for v in cond.values if isinstance(v, Single))
    hit = any(value_matches(v, observed) for v in cond.values)
    return hit if cond.operation == "EQUAL" else not hit


def match_rule(rule: MlpRule, packet: Packet) -> bool:
    results = (match_condition(c, packet) for c in rule.conditions)
    return all(results) if rule.evaluation == "AllOf" else any(results)


def _priority_name(resolved: ResolvedNsf | None) -> str | None:
    if resolved is None:
        return "priority"
    for spec in resolved.required_external_data:
        if spec.value_type == "integer":
            return spec.name
    return None


def rule_priority(rule: MlpRule, name: str | None) -> int | None:
    if name is None or name not in rule.external_data:
        return None
    try:
        return int(rule.external_data[name])
    except ValueError:
        return None


def match_policy(policy: MlpPolicy, packet: Packet, resolved: ResolvedNsf | None = None) -> Outcome:
    """Apply the highest-priority matching rule (lowest priority value, then
    document order); fall back to the default action, else ``NoDecision``."""
    name = _priority_name(resolved)
    best: tuple[tuple, MlpRule] | None = None
    for index, rule in enumerate(policy.rules):
        if not match_rule(rule, packet):
            continue
        prio = rule_priority(rule, name)
        rank = (0 if prio is not None else 1, prio if prio is not None else 0, index)
        if best is None or rank < best[0]:
            best = (rank, rule)
    if best is not None:
        return Outcome("rule", best[1].actions, best[1].id)
    if policy.default_action is not None:
        return Outcome("default", (policy.default_action,))
    return NO_DECISION
