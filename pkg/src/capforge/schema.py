"""Per-NSF abstract language, emitted as a JSON Schema (draft 2020-12).

The schema accepts an MLP document exactly when :func:`capforge.mlp.validate_mlp`
reports no error for it, except for checks spanning several fields (range
bound ordering and inter-capability dependencies), which stay with the
validator.
"""

from __future__ import annotations

import json
from collections.abc import Mapping

from jsonschema import Draft202012Validator, FormatChecker

from .catalogue import CapabilityDescriptor, ResolvedNsf
from .mlp import EVALUATION_ALIASES
from .values import INTERFACE_NAME_RE, IPV4_RE, NUM_RE, PORT_RE, PREFIX_RE, PROTOCOL_NAME_RE, STRUCTURED_SHAPE_RE

DIALECT = "https://json-schema.org/draft/2020-12/schema"
_OPERATIONS = {"exactMatch": "EQUAL", "notEqualTo": "NOT_EQUAL_TO", "regex": "REGEX"}
_LITERAL = {"type": ["string", "integer"]}


def _not_structured(schema: dict) -> dict:
    return {**schema, "type": "string", "not": {"pattern": STRUCTURED_SHAPE_RE}}


def _single_schema(desc: CapabilityDescriptor) -> dict:
    vt = desc.value_type
    if vt == "ipv4-address":
        return {"type": "string", "pattern": f"^{IPV4_RE}$"}
    if vt == "port-number":
        return {"type": "integer", "minimum": 0, "maximum": 65535}
    if vt == "integer":
        return {"type": "integer"}
    if vt == "enum":
        return {"type": "string", "enum": list(desc.enum_values)}
    if vt == "protocol-name":
        return _not_structured({"pattern": PROTOCOL_NAME_RE})
    if vt == "interface-name":
        return _not_structured({"pattern": INTERFACE_NAME_RE})
    if vt == "string-pattern":
        return _not_structured({"minLength": 1})
    return {"not": {}}


def _range_schemas(desc: CapabilityDescriptor) -> list[dict]:
    vt = desc.value_type
    if vt == "ipv4-address":
        bound = {"type": "string", "pattern": f"^{IPV4_RE}$"}
        shorthand = {"type": "string", "pattern": f"^{IPV4_RE}/{PREFIX_RE}$"}
    elif vt == "port-number":
        bound = {"type": "integer", "minimum": 0, "maximum": 65535}
        shorthand = {"type": "string", "pattern": f"^{PORT_RE}-{PORT_RE}$"}
    else:
        bound = {"type": "integer"}
        shorthand = {"type": "string", "pattern": f"^{NUM_RE}-{NUM_RE}$"}
    obj = {
        "type": "object",
        "additionalProperties": False,
        "required": ["range"],
        "properties": {"range": {"type": "array", "prefixItems": [bound, bound], "minItems": 2, "maxItems": 2}},
    }
    return [shorthand, obj]


def _value_schema(desc: CapabilityDescriptor) -> dict:
    single = _single_schema(desc)
    if "range" not in desc.operators:
        return single
    return {"anyOf": [single, *_range_schemas(desc)]}


def _condition_def(desc: CapabilityDescriptor) -> dict:
    ops = [_OPERATIONS[o] for o in desc.operators if o in _OPERATIONS]
    schema: dict = {
        "type": "object",
        "additionalProperties": False,
        "required": ["capability", "operation", "values"],
        "properties": {
            "capability": {"const": desc.id},
            "operation": {"enum": ops},
            "values": {"type": "array", "minItems": 1, "items": _value_schema(desc)},
        },
    }
    if "REGEX" in ops:
        schema["if"] = {"properties": {"operation": {"const": "REGEX"}}}
        schema["then"] = {"properties": {"values": {"items": {"format": "regex"}}}}
    return schema


def _action_def(desc: CapabilityDescriptor) -> dict:
    props: dict = {"capability": {"const": desc.id}}
    required = ["capability"]
    if desc.value_type != "none":
        props["value"] = _single_schema(desc)
        required.append("value")
    return {"type": "object", "additionalProperties": False, "required": required, "properties": props}


def _def_name(cap_id: str) -> str:
    return cap_id[:1].lower() + cap_id[1:]


def _choice(ids: list[str]) -> dict:
    if not ids:
        return {"type": "array", "maxItems": 0}
    return {"type": "array", "items": {"oneOf": [{"$ref": f"#/$defs/{_def_name(c)}"} for c in ids]}}


def _mentions(cap_id: str) -> dict:
    hit = {"contains": {"properties": {"capability": {"const": cap_id}}, "required": ["capability"]}}
    return {
        "anyOf": [
            {"required": ["conditions"], "properties": {"conditions": hit}},
            {"required": ["actions"], "properties": {"actions": hit}},
        ]
    }


def emit_abstract_language(resolved: ResolvedNsf) -> dict:
    """Build the schema document for one resolved NSF."""
    conditions = resolved.of_kind("Condition")
    actions = resolved.of_kind("Action")
    defs: dict = {}
    for c in conditions:
        defs[_def_name(c)] = _condition_def(resolved.descriptors[c])
    for a in actions:
        defs[_def_name(a)] = _action_def(resolved.descriptors[a])

    evaluations = set(resolved.of_kind("Evaluation"))
    allowed_eval = sorted(
        alias for alias, mode in EVALUATION_ALIASES.items() if mode == "AllOf" or f"{mode}EvaluationCapability" in evaluations
    )
    ext_props: dict = {}
    for spec in resolved.required_external_data:
        ext_props[spec.name] = {"type": ["string", "integer"], "pattern": "^-?[0-9]+$"} if spec.value_type == "integer" else _LITERAL
    external = {"type": "object", "properties": ext_props, "additionalProperties": _LITERAL}
    if ext_props:
        external["required"] = sorted(ext_props)

    rule: dict = {
        "type": "object",
        "additionalProperties": False,
        "required": ["id", "actions"] + (["externalData"] if ext_props else []),
        "properties": {
            "id": {"type": "string"},
            "ruleType": {"type": "string"},
            "description": {"type": "string"},
            "label": {"type": "string"},
            "externalData": external,
            "evaluation": {"enum": allowed_eval},
            "conditions": _choice(conditions),
            "actions": {**_choice(actions), "minItems": 1},
        },
    }
    mandatory = resolved.policy_details.mandatory_capabilities if resolved.policy_details else ()
    if mandatory:
        rule["allOf"] = [_mentions(m) for m in mandatory]
    defs["rule"] = rule

    required_attrs = sorted(resolved.policy_details.policy_attributes) if resolved.policy_details else []
    attributes: dict = {"type": "object", "additionalProperties": {"type": "string"}}
    if required_attrs:
        attributes["required"] = required_attrs
    props: dict = {
        "nsfName": {"type": "string"},
        "attributes": attributes,
        "rules": {"type": "array", "items": {"$ref": "#/$defs/rule"}},
    }
    pool = sorted(resolved.default_action_pool)
    if pool:
        props["defaultAction"] = {"oneOf": [{"$ref": f"#/$defs/{_def_name(a)}"} for a in pool]}
    policy: dict = {
        "$schema": DIALECT,
        "$id": f"urn:capforge:language:{resolved.id}",
        "title": f"{resolved.id} abstract language",
        "type": "object",
        "additionalProperties": False,
        "required": ["nsfName"] + (["attributes"] if required_attrs else []),
        "properties": props,
        "$defs": defs,
    }
    return policy


def schema_text(schema: Mapping) -> str:
    return json.dumps(schema, indent=2, sort_keys=True) + "\n"


def schema_errors(schema: Mapping, document: object) -> list[str]:
    """Human-readable reasons ``document`` is rejected; empty when accepted."""
    validator = Draft202012Validator(schema, format_checker=FormatChecker())
    errors = sorted(validator.iter_errors(document), key=lambda e: list(e.absolute_path))
    return [f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}" for e in errors]


def schema_accepts(schema: Mapping, document: object) -> bool:
    return Draft202012Validator(schema, format_checker=FormatChecker()).is_valid(document)
