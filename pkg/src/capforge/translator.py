"""Model-driven MLP to LLC compiler.

Every NSF-specific string comes from the catalogue's translation and policy
details; nothing here knows about a particular firewall.

Within a rule, tokens are grouped by the ``placement`` of each capability's
details: ``head`` (actions, then conditions), ``body`` (conditions, then
actions) and ``tail`` (conditions, then actions), each in document order.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Mapping
from dataclasses import dataclass, replace

from .catalogue import ResolvedNsf
from .details import TranslationDetails
from .errors import (
    DependencyViolation,
    IncompleteMergeGroup,
    InvalidPolicy,
    MandatoryCapabilityAbsent,
    MissingAttribute,
    NoApplicableCommandName,
    UnsatisfiableNegatedUnion,
)
from .mlp import (
    ActionInstance,
    ConditionInstance,
    MlpPolicy,
    MlpRule,
    dependency_violations,
    rule_priority,
    validate_mlp,
)
from .values import Range, Single

INLINE = "inline-join"
EXPAND = "expand"
CONJOIN = "conjoin"

# Diagnostics that translate() reports through dedicated errors instead.
_HANDLED = ("dependency-violation", "mandatory-capability-absent", "missing-policy-attribute", "dependency-order")


@dataclass(frozen=True)
class ExpansionPlan:
    decisions: tuple[str, ...]  # one per condition of the rule
    expected_rule_count: int


@dataclass(frozen=True)
class Token:
    capability: str
    text: str
    value_text: str = ""


def _element_kinds(cond: ConditionInstance) -> set[str]:
    return {"elementRange" if isinstance(v, Range) else "elementValue" for v in cond.values}


def _joinable(cond: ConditionInstance, details: TranslationDetails | None) -> bool:
    if details is None or details.body_concatenator is None or details.preferred_expansion == "always":
        return False
    allowed = details.body_concatenator.applicability
    return allowed is None or _element_kinds(cond) <= allowed


def plan_expansion(rule: MlpRule, details: Mapping[str, TranslationDetails]) -> ExpansionPlan:
    """Decide, per condition, whether multiple values are joined inline or
    expanded into separate rules; joining is preferred whenever possible."""
    decisions = []
    count = 1
    for cond in rule.conditions:
        d = details.get(cond.capability)
        if len(cond.values) == 1 or _joinable(cond, d):
            decisions.append(INLINE)
            continue
        if d is not None and d.preferred_expansion == "never":
            raise InvalidPolicy(
                f"rule {rule.id}: {cond.capability} has several values but may neither be joined nor expanded",
                rule=rule.id,
                capability=cond.capability,
            )
        if cond.operation == "NOT_EQUAL_TO":
            if rule.evaluation != "AllOf" or d is None or not d.repeatable:
                raise UnsatisfiableNegatedUnion(
                    f"rule {rule.id}: negated value set on {cond.capability} cannot be joined and the capability cannot repeat",
                    rule=rule.id,
                    capability=cond.capability,
                )
            decisions.append(CONJOIN)
            continue
        decisions.append(EXPAND)
        count *= len(cond.values)
    return ExpansionPlan(tuple(decisions), count)


def expand_rule(rule: MlpRule, plan: ExpansionPlan) -> list[MlpRule]:
    """Cartesian expansion; the first expanded condition varies slowest."""
    expanded = [i for i, d in enumerate(plan.decisions) if d == EXPAND]
    choices = [rule.conditions[i].values for i in expanded]
    out = []
    for combo in itertools.product(*choices):
        picked = dict(zip(expanded, combo))
        conds: list[ConditionInstance] = []
        for i, cond in enumerate(rule.conditions):
            if i in picked:
                conds.append(replace(cond, values=(picked[i],)))
            elif plan.decisions[i] == CONJOIN:
                conds.extend(replace(cond, values=(v,)) for v in cond.values)
            else:
                conds.append(cond)
        out.append(replace(rule, conditions=tuple(conds)))
    return out


def select_command_name(
    instance: ConditionInstance | ActionInstance, details: TranslationDetails, *, joined: bool = False
) -> str:
    attributes = {"operation": instance.operation} if isinstance(instance, ConditionInstance) else {}
    names = details.command_names
    conc = details.body_concatenator
    if joined and conc is not None and conc.new_command_names:
        names = conc.new_command_names
    for cn in names:
        if cn.condition is not None and attributes.get(cn.condition[0]) == cn.condition[1]:
            return cn.real_command_name
    for cn in names:
        if cn.condition is None:
            return cn.real_command_name
    raise NoApplicableCommandName(f"no command name applies to {instance.capability}", capability=instance.capability)


def _details_for(capability: str, resolved: ResolvedNsf) -> TranslationDetails:
    d = resolved.translation_details.get(capability)
    if d is None:
        raise NoApplicableCommandName(f"{resolved.id} has no translation details for {capability}", capability=capability)
    return d


def _token(name: str, details: TranslationDetails, body: str | None) -> str:
    if body is None:
        return name
    block = details.prefix + body + details.suffix
    if not name:
        return block
    return name + details.value_separator + block


def render_condition(cond: ConditionInstance, details: TranslationDetails) -> Token:
    texts = [v.render(details.range_separator) for v in cond.values]
    if len(texts) > 1:
        conc = details.body_concatenator
        assert conc is not None
        body = conc.prefix + conc.real_concatenator.join(texts) + conc.suffix
        name = select_command_name(cond, details, joined=True)
    else:
        body = texts[0]
        name = select_command_name(cond, details)
    return Token(cond.capability, _token(name, details, body), body)


def render_action(act: ActionInstance, details: TranslationDetails) -> Token:
    name = select_command_name(act, details)
    body = None if act.value is None else str(act.value)
    return Token(act.capability, _token(name, details, body), body or "")


def render_merge_groups(tokens: list[Token], details: Mapping[str, TranslationDetails]) -> list[Token]:
    """Fold the members of each merge group into one token placed where the
    first member appeared; each distinct once-prefix is emitted once per rule."""
    groups: dict[str, dict[int, str]] = {}
    for cap, d in details.items():
        if d.merge_group is not None:
            groups.setdefault(d.merge_group.group_id, {})[d.merge_group.slot] = cap
    present: dict[str, dict[int, Token]] = {}
    for tok in tokens:
        mg = details[tok.capability].merge_group if tok.capability in details else None
        if mg is not None:
            present.setdefault(mg.group_id, {})[mg.slot] = tok
    for gid, members in present.items():
        missing = [groups[gid][s] for s in sorted(groups[gid]) if s not in members]
        if missing:
            raise IncompleteMergeGroup(f"merge group {gid!r} is missing {', '.join(missing)}", group=gid, missing=missing)
    out: list[Token] = []
    done: set[str] = set()
    prefixes: set[str] = set()
    for tok in tokens:
        mg = details[tok.capability].merge_group if tok.capability in details else None
        if mg is None:
            out.append(tok)
            continue
        if mg.group_id in done:
            continue
        done.add(mg.group_id)
        template = next(details[c].merge_group.template for c in groups[mg.group_id].values() if details[c].merge_group.template)
        for slot, member in present[mg.group_id].items():
            template = template.replace("{" + str(slot) + "}", member.value_text)
        once = next((details[c].merge_group.emit_once_prefix for c in groups[mg.group_id].values() if details[c].merge_group.emit_once_prefix), "")
        text = template
        if once and once not in prefixes:
            prefixes.add(once)
            text = f"{once} {template}"
        out.append(Token(f"group:{mg.group_id}", text, template))
    return out


def rule_tokens(rule: MlpRule, resolved: ResolvedNsf) -> list[Token]:
    """Tokens of one fully expanded rule, merge groups applied."""
    sections: dict[str, list[Token]] = {"head": [], "body": [], "tail": []}
    conds = [(c, _details_for(c.capability, resolved)) for c in rule.conditions]
    acts = [(a, _details_for(a.capability, resolved)) for a in rule.actions]
    for a, d in acts:
        if d.placement == "head":
            sections["head"].append(render_action(a, d))
    for c, d in conds:
        sections[d.placement].append(render_condition(c, d))
    for a, d in acts:
        if d.placement != "head":
            sections[d.placement].append(render_action(a, d))
    tokens = sections["head"] + sections["body"] + sections["tail"]
    return render_merge_groups(tokens, resolved.translation_details)


def auto_satisfy(rule: MlpRule, resolved: ResolvedNsf) -> MlpRule:
    """Inject conditions required by single-valued presence dependencies
    whose target capability is absent from the rule."""
    conds = list(rule.conditions)
    used = {c.capability for c in conds} | {a.capability for a in rule.actions}
    for cap, dep in dependency_violations(rule, resolved):
        target = dep.of_capability
        if dep.mode != "presence" or len(dep.required_value) != 1 or target in used:
            continue
        if resolved.descriptors[target].kind != "Condition":
            continue
        position = next((i for i, c in enumerate(conds) if c.capability == cap), len(conds))
        conds.insert(position, ConditionInstance(target, "EQUAL", (Single(dep.required_value[0]),)))
        used.add(target)
    return replace(rule, conditions=tuple(conds))


def _ordered_rules(policy: MlpPolicy, resolved: ResolvedNsf) -> list[MlpRule]:
    specs = [s for s in resolved.required_external_data if s.value_type == "integer"]
    if not specs:
        return list(policy.rules)
    name = specs[0].name
    keyed = []
    for index, rule in enumerate(policy.rules):
        prio = rule_priority(rule, name)
        keyed.append(((prio if prio is not None else math.inf, index), rule))
    keyed.sort(key=lambda kv: kv[0])
    ordered = [rule for _, rule in keyed]
    if resolved.resolution_details is not None and resolved.resolution_details.ordering == "descending":
        ordered.reverse()
    return ordered


def _default_line(policy: MlpPolicy, resolved: ResolvedNsf, attributes: Mapping[str, str]) -> str | None:
    da = policy.default_action
    if da is None:
        return None
    pd = resolved.policy_details
    d = _details_for(da.capability, resolved)
    value = da.value if da.value is not None else d.default_value
    if value is None:
        value = select_command_name(da, d)
    try:
        body = pd.default_action_format.format_map({**attributes, "value": value})
    except KeyError as exc:
        raise MissingAttribute(f"default action format needs attribute {exc.args[0]!r}", attribute=exc.args[0]) from None
    return " ".join(t for t in (pd.rule_start, body) if t)


def translate(
    policy: MlpPolicy,
    resolved: ResolvedNsf,
    attributes: Mapping[str, str] | None = None,
    *,
    auto_satisfy_dependencies: bool = False,
) -> str:
    """Compile ``policy`` to the NSF's configuration text (LF-terminated lines)."""
    pd = resolved.policy_details
    if pd is None:
        raise InvalidPolicy(f"{resolved.id} is abstract and has no configuration syntax", nsf=resolved.id)
    attrs = {**policy.policy_attributes, **(attributes or {})}
    for name in pd.policy_attributes:
        if name not in attrs:
            raise MissingAttribute(f"policy attribute {name!r} is required by {resolved.id}", attribute=name)
    for rule in policy.rules:
        used = {c.capability for c in rule.conditions} | {a.capability for a in rule.actions}
        for m in pd.mandatory_capabilities:
            if m not in used:
                raise MandatoryCapabilityAbsent(f"rule {rule.id}: mandatory capability absent: {m}", rule=rule.id, capability=m)
    errors = [d for d in validate_mlp(policy, resolved) if d.severity == "error" and d.code not in _HANDLED]
    if errors:
        raise InvalidPolicy(
            f"policy is not valid for {resolved.id}: {errors[0].message}",
            diagnostics=[d.to_doc() for d in errors],
        )

    lines: list[str] = []
    for rule in _ordered_rules(policy, resolved):
        if auto_satisfy_dependencies:
            rule = auto_satisfy(rule, resolved)
        problems = dependency_violations(rule, resolved)
        if problems:
            cap, dep = problems[0]
            raise DependencyViolation(
                f"rule {rule.id}: {cap} requires {dep.describe()}",
                rule=rule.id,
                capability=cap,
                dependency=dep.of_capability,
            )
        for fragment in expand_rule(rule, plan_expansion(rule, resolved.translation_details)):
            tokens = [t.text for t in rule_tokens(fragment, resolved)]
            lines.append(" ".join(t for t in (pd.rule_start, *tokens, pd.rule_end) if t))

    default = _default_line(policy, resolved, attrs)
    if default is not None:
        if pd.default_action_position == "first":
            lines.insert(0, default)
        else:
            lines.append(default)
    if pd.policy_trailer:
        lines.append(pd.policy_trailer)
    text = "".join(line + "\n" for line in lines)
    try:
        text.encode(pd.policy_encoding)
    except UnicodeEncodeError as exc:
        raise InvalidPolicy(f"output cannot be encoded as {pd.policy_encoding}: {exc.reason}") from None
    return text


def encode_llc(text: str, resolved: ResolvedNsf) -> bytes:
    encoding = resolved.policy_details.policy_encoding if resolved.policy_details else "utf-8"
    return text.encode(encoding)
