"""Decorations attached to an (NSF, capability) association.

These records drive the translator; they carry no behaviour of their own.
Document field names are camelCase and are read by the ``*_from_doc``
helpers, which raise :class:`~capforge.errors.ParseError` with the JSON path
of the offending field.
"""

from __future__ import annotations

import codecs
from dataclasses import dataclass

from .errors import ParseError
from .values import VALUE_TYPES

EXPANSIONS = ("auto", "always", "never")
PLACEMENTS = ("head", "body", "tail")
ELEMENT_KINDS = ("elementValue", "elementRange")


@dataclass(frozen=True)
class CommandName:
    real_command_name: str
    # (attribute_name, attribute_value); None means unconditioned.
    condition: tuple[str, str] | None = None


@dataclass(frozen=True)
class Concatenator:
    real_concatenator: str
    operator_type: str = "union"
    # Element kinds the join may combine; None means any.
    applicability: frozenset[str] | None = None
    new_command_names: tuple[CommandName, ...] = ()
    prefix: str = ""
    suffix: str = ""


@dataclass(frozen=True)
class Dependency:
    mode: str  # presence | absence
    of_capability: str
    required_value: tuple[str, ...] = ()

    def describe(self) -> str:
        text = f"{self.mode} of {self.of_capability}"
        if self.required_value:
            text += " with value " + "|".join(self.required_value)
        return text


@dataclass(frozen=True)
class MergeGroup:
    group_id: str
    slot: int
    template: str = ""
    emit_once_prefix: str = ""


@dataclass(frozen=True)
class TranslationDetails:
    capability: str
    command_names: tuple[CommandName, ...]
    prefix: str = ""
    suffix: str = ""
    value_separator: str = " "
    body_concatenator: Concatenator | None = None
    range_separator: str = "-"
    dependencies: tuple[Dependency, ...] = ()
    merge_group: MergeGroup | None = None
    preferred_expansion: str = "auto"
    placement: str = "body"
    repeatable: bool = False
    default_value: str | None = None


@dataclass(frozen=True)
class NsfPolicyDetails:
    rule_start: str = ""
    rule_end: str = ""
    policy_trailer: str = ""
    policy_encoding: str = "ascii"
    mandatory_capabilities: tuple[str, ...] = ()
    policy_attributes: tuple[str, ...] = ()
    default_action_format: str = "{value}"
    default_action_position: str = "last"


@dataclass(frozen=True)
class ExternalDataSpec:
    name: str
    value_type: str


@dataclass(frozen=True)
class ResolutionStrategyDetails:
    strategy_capability: str
    required_external_data: tuple[ExternalDataSpec, ...] = ()
    ordering: str = "ascending"


def _str(doc: dict, key: str, path: str, default: str | None = None) -> str:
    if key not in doc:
        if default is None:
            raise ParseError(f"missing field {key!r}", path=path)
        return default
    value = doc[key]
    if not isinstance(value, str):
        raise ParseError(f"field {key!r} must be a string", path=f"{path}.{key}")
    return value


def _list(doc: dict, key: str, path: str) -> list:
    value = doc.get(key, [])
    if not isinstance(value, list):
        raise ParseError(f"field {key!r} must be a list", path=f"{path}.{key}")
    return value


def _obj(value: object, path: str) -> dict:
    if not isinstance(value, dict):
        raise ParseError("expected an object", path=path)
    return value


def _command_name(doc: object, path: str) -> CommandName:
    doc = _obj(doc, path)
    cond = doc.get("condition")
    parsed = None
    if cond is not None:
        cond = _obj(cond, f"{path}.condition")
        parsed = (
            _str(cond, "attributeName", f"{path}.condition"),
            _str(cond, "attributeValue", f"{path}.condition"),
        )
    return CommandName(_str(doc, "realCommandName", path), parsed)


def _concatenator(doc: object, path: str) -> Concatenator:
    doc = _obj(doc, path)
    op = _str(doc, "operatorType", path, "union")
    if op != "union":
        raise ParseError(f"unsupported concatenator operatorType {op!r}", path=f"{path}.operatorType")
    applicability = None
    if "concatenatorCondition" in doc:
        cond = _obj(doc["concatenatorCondition"], f"{path}.concatenatorCondition")
        kinds = set()
        for k in ("preVariable", "postVariable"):
            v = _str(cond, k, f"{path}.concatenatorCondition")
            if v not in ELEMENT_KINDS:
                raise ParseError(f"unknown element kind {v!r}", path=f"{path}.concatenatorCondition.{k}")
            kinds.add(v)
        applicability = frozenset(kinds)
    return Concatenator(
        real_concatenator=_str(doc, "realConcatenator", path),
        operator_type=op,
        applicability=applicability,
        new_command_names=tuple(
            _command_name(c, f"{path}.newCommandNames[{i}]")
            for i, c in enumerate(_list(doc, "newCommandNames", path))
        ),
        prefix=_str(doc, "prefix", path, ""),
        suffix=_str(doc, "suffix", path, ""),
    )


def _dependency(doc: object, path: str) -> Dependency:
    doc = _obj(doc, path)
    mode = _str(doc, "mode", path, "presence")
    if mode not in ("presence", "absence"):
        raise ParseError(f"dependency mode must be presence or absence, got {mode!r}", path=f"{path}.mode")
    values = _list(doc, "values", path)
    if not all(isinstance(v, str) for v in values):
        raise ParseError("dependency values must be strings", path=f"{path}.values")
    return Dependency(mode, _str(doc, "ofCapability", path), tuple(values))


def translation_details_from_doc(doc: object, path: str) -> TranslationDetails:
    doc = _obj(doc, path)
    names = tuple(_command_name(c, f"{path}.commandNames[{i}]") for i, c in enumerate(_list(doc, "commandNames", path)))
    if not any(c.condition is None for c in names):
        raise ParseError("at least one unconditioned command name is required", path=f"{path}.commandNames")
    merge = None
    if "mergeGroup" in doc:
        m = _obj(doc["mergeGroup"], f"{path}.mergeGroup")
        slot = m.get("slot")
        if not isinstance(slot, int) or isinstance(slot, bool) or slot < 1:
            raise ParseError("merge group slot must be a positive integer", path=f"{path}.mergeGroup.slot")
        merge = MergeGroup(
            _str(m, "groupId", f"{path}.mergeGroup"),
            slot,
            _str(m, "template", f"{path}.mergeGroup", ""),
            _str(m, "emitOncePrefix", f"{path}.mergeGroup", ""),
        )
    expansion = _str(doc, "preferredExpansion", path, "auto")
    if expansion not in EXPANSIONS:
        raise ParseError(f"preferredExpansion must be one of {EXPANSIONS}", path=f"{path}.preferredExpansion")
    placement = _str(doc, "placement", path, "body")
    if placement not in PLACEMENTS:
        raise ParseError(f"placement must be one of {PLACEMENTS}", path=f"{path}.placement")
    repeatable = doc.get("repeatable", False)
    if not isinstance(repeatable, bool):
        raise ParseError("repeatable must be a boolean", path=f"{path}.repeatable")
    default_value = doc.get("defaultValue")
    if default_value is not None and not isinstance(default_value, str):
        raise ParseError("defaultValue must be a string", path=f"{path}.defaultValue")
    return TranslationDetails(
        capability=_str(doc, "capability", path),
        command_names=names,
        prefix=_str(doc, "prefix", path, ""),
        suffix=_str(doc, "suffix", path, ""),
        value_separator=_str(doc, "valueSeparator", path, " "),
        body_concatenator=_concatenator(doc["bodyConcatenator"], f"{path}.bodyConcatenator")
        if "bodyConcatenator" in doc
        else None,
        range_separator=_str(doc, "rangeSeparator", path, "-"),
        dependencies=tuple(_dependency(d, f"{path}.dependencies[{i}]") for i, d in enumerate(_list(doc, "dependencies", path))),
        merge_group=merge,
        preferred_expansion=expansion,
        placement=placement,
        repeatable=repeatable,
        default_value=default_value,
    )


def policy_details_from_doc(doc: object, path: str) -> NsfPolicyDetails:
    doc = _obj(doc, path)
    attrs = []
    for i, a in enumerate(_list(doc, "policyAttributes", path)):
        a = _obj(a, f"{path}.policyAttributes[{i}]")
        attrs.append(_str(a, "attributeName", f"{path}.policyAttributes[{i}]"))
    mandatory = _list(doc, "mandatoryCapabilities", path)
    if not all(isinstance(m, str) for m in mandatory):
        raise ParseError("mandatoryCapabilities must be strings", path=f"{path}.mandatoryCapabilities")
    encoding = _str(doc, "policyEncoding", path, "ascii")
    try:
        codecs.lookup(encoding)
    except LookupError:
        raise ParseError(f"unknown policyEncoding {encoding!r}", path=f"{path}.policyEncoding") from None
    position = _str(doc, "defaultActionPosition", path, "last")
    if position not in ("first", "last"):
        raise ParseError("defaultActionPosition must be first or last", path=f"{path}.defaultActionPosition")
    return NsfPolicyDetails(
        rule_start=_str(doc, "ruleStart", path, ""),
        rule_end=_str(doc, "ruleEnd", path, ""),
        policy_trailer=_str(doc, "policyTrailer", path, ""),
        policy_encoding=encoding,
        mandatory_capabilities=tuple(mandatory),
        policy_attributes=tuple(attrs),
        default_action_format=_str(doc, "defaultActionFormat", path, "{value}"),
        default_action_position=position,
    )


def resolution_details_from_doc(doc: object, path: str) -> ResolutionStrategyDetails:
    doc = _obj(doc, path)
    required = []
    for i, r in enumerate(_list(doc, "requiredExternalData", path)):
        r = _obj(r, f"{path}.requiredExternalData[{i}]")
        vt = _str(r, "valueType", f"{path}.requiredExternalData[{i}]")
        if vt not in VALUE_TYPES:
            raise ParseError(f"unknown valueType {vt!r}", path=f"{path}.requiredExternalData[{i}].valueType")
        required.append(ExternalDataSpec(_str(r, "name", f"{path}.requiredExternalData[{i}]"), vt))
    ordering = _str(doc, "ordering", path, "ascending")
    if ordering not in ("ascending", "descending"):
        raise ParseError("ordering must be ascending or descending", path=f"{path}.ordering")
    return ResolutionStrategyDetails(_str(doc, "capability", path), tuple(required), ordering)
