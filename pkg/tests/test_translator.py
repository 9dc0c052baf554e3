import copy
import random
from dataclasses import replace

import pytest
from hypothesis import assume, given, settings, strategies as st

from capforge.details import TranslationDetails
from capforge.errors import DependencyViolation, IncompleteMergeGroup, MissingAttribute, UnsatisfiableNegatedUnion
from capforge.mlp import ConditionInstance, MlpRule, match_policy, parse_mlp, serialize_mlp
from capforge.translator import CONJOIN, INLINE, plan_expansion, select_command_name, translate
from capforge.values import parse_value

from oracles import rule_holds
from scenarios import UNIVERSE, analytic_count, check_case, minimal, preserves, random_case

SPORT = "SourcePortConditionCapability"
DPORT = "DestinationPortConditionCapability"
PROTO = "IpProtocolTypeConditionCapability"
SRC = "IpSourceAddressConditionCapability"

GOLDEN = "iptables -A OUTPUT -i eth0 -p TCP -s 192.168.1.1 -j DROP\niptables -P OUTPUT ACCEPT\n"


def iptables_policy(conditions, actions=None, rules=None):
    rule = {
        "id": "r1",
        "externalData": {"priority": "1"},
        "conditions": conditions,
        "actions": actions or [{"capability": "AppendRuleActionCapability", "value": "INPUT"}, {"capability": "RejectActionCapability"}],
    }
    return parse_mlp({"nsfName": "IpTables", "attributes": {"targetRuleSet": "INPUT"}, "rules": rules or [rule]})


def cond(cap, values, op="EQUAL"):
    return {"capability": cap, "operation": op, "values": values}


def without_concatenator(resolved, cap, repeatable=False):
    details = dict(resolved.translation_details)
    details[cap] = replace(details[cap], body_concatenator=None, repeatable=repeatable)
    return replace(resolved, translation_details=details)


def test_golden_translation(catalogue, iptables_mlp):
    assert translate(parse_mlp(iptables_mlp), catalogue.resolved("IpTables")) == GOLDEN


def test_translation_is_deterministic(catalogue, iptables_mlp):
    resolved = catalogue.resolved("IpTables")
    outputs = {translate(parse_mlp(copy.deepcopy(iptables_mlp)), resolved) for _ in range(5)}
    assert outputs == {GOLDEN}


def test_serialisation_round_trip_preserves_translation(catalogue, iptables_mlp):
    resolved = catalogue.resolved("IpTables")
    policy = parse_mlp(iptables_mlp)
    assert translate(parse_mlp(serialize_mlp(policy)), resolved) == translate(policy, resolved)


def test_empty_policy_emits_only_default_line(catalogue):
    policy = parse_mlp({"nsfName": "IpTables", "attributes": {"targetRuleSet": "INPUT"}, "rules": [], "defaultAction": {"capability": "RejectActionCapability"}})
    assert translate(policy, catalogue.resolved("IpTables")) == "iptables -P INPUT DROP\n"


def test_missing_policy_attribute(catalogue, iptables_mlp):
    del iptables_mlp["attributes"]
    with pytest.raises(MissingAttribute):
        translate(parse_mlp(iptables_mlp), catalogue.resolved("IpTables"))
    assert translate(parse_mlp(iptables_mlp), catalogue.resolved("IpTables"), {"targetRuleSet": "OUTPUT"}) == GOLDEN


def test_icmp_with_port_is_a_dependency_violation(catalogue):
    policy = iptables_policy([cond(PROTO, ["ICMP"]), cond(SPORT, [80])])
    with pytest.raises(DependencyViolation) as err:
        translate(policy, catalogue.resolved("IpTables"))
    assert err.value.detail["dependency"] == PROTO
    assert PROTO in str(err.value)


def test_command_name_selection(catalogue):
    d = catalogue.resolved("IpTables").translation_details[SPORT]
    single = ConditionInstance(SPORT, "EQUAL", (parse_value(80),))
    negated = ConditionInstance(SPORT, "NOT_EQUAL_TO", (parse_value(80),))
    assert select_command_name(single, d) == "--sport"
    assert select_command_name(negated, d) == "! --sport"
    assert select_command_name(single, d, joined=True) == "-m multiport --sports"
    assert select_command_name(negated, d, joined=True) == "! -m multiport --sports"


def test_multiport_joins_inline(catalogue):
    policy = iptables_policy([cond(PROTO, ["tcp"]), cond(SPORT, [80, 443])])
    text = translate(policy, catalogue.resolved("IpTables"), {"targetRuleSet": "INPUT"})
    assert text.splitlines()[0] == "iptables -A INPUT -p tcp -m multiport --sports 80,443 -j DROP"


def test_negated_multiport_joins_inline(catalogue):
    policy = iptables_policy([cond(PROTO, ["tcp"]), cond(SPORT, [80, 443], "NOT_EQUAL_TO")])
    line = translate(policy, catalogue.resolved("IpTables")).splitlines()[0]
    assert line == "iptables -A INPUT -p tcp ! -m multiport --sports 80,443 -j DROP"


def test_without_concatenator_expands_per_value(catalogue):
    resolved = without_concatenator(catalogue.resolved("IpTables"), SPORT)
    policy = iptables_policy([cond(PROTO, ["tcp"]), cond(SPORT, [80, 443])])
    lines = translate(policy, resolved).splitlines()
    assert lines[:2] == [
        "iptables -A INPUT -p tcp --sport 80 -j DROP",
        "iptables -A INPUT -p tcp --sport 443 -j DROP",
    ]


def test_cartesian_expansion_order(catalogue):
    resolved = catalogue.resolved("IpTables")
    resolved = without_concatenator(resolved, DPORT)
    policy = iptables_policy([cond(PROTO, ["tcp"]), cond(DPORT, [80, 443]), cond(SRC, ["10.0.0.1", "10.0.0.2"])])
    lines = translate(policy, resolved).splitlines()[:4]
    assert lines == [
        "iptables -A INPUT -p tcp --dport 80 -s 10.0.0.1 -j DROP",
        "iptables -A INPUT -p tcp --dport 80 -s 10.0.0.2 -j DROP",
        "iptables -A INPUT -p tcp --dport 443 -s 10.0.0.1 -j DROP",
        "iptables -A INPUT -p tcp --dport 443 -s 10.0.0.2 -j DROP",
    ]


def test_negated_union_on_repeatable_capability_conjoins(catalogue):
    resolved = without_concatenator(catalogue.resolved("IpTables"), SPORT, repeatable=True)
    policy = iptables_policy([cond(PROTO, ["tcp"]), cond(SPORT, [80, 443], "NOT_EQUAL_TO")])
    assert plan_expansion(policy.rules[0], resolved.translation_details).decisions == (INLINE, CONJOIN)
    lines = translate(policy, resolved).splitlines()
    assert lines[0] == "iptables -A INPUT -p tcp ! --sport 80 ! --sport 443 -j DROP"
    assert len(lines) == 1


def test_negated_union_without_join_or_repeat_is_rejected(catalogue):
    resolved = without_concatenator(catalogue.resolved("IpTables"), SPORT)
    policy = iptables_policy([cond(PROTO, ["tcp"]), cond(SPORT, [80, 443], "NOT_EQUAL_TO")])
    with pytest.raises(UnsatisfiableNegatedUnion):
        translate(policy, resolved)


def test_negated_union_under_any_of_is_rejected():
    details = {SPORT: TranslationDetails(SPORT, (), repeatable=True)}
    rule = MlpRule("r", (ConditionInstance(SPORT, "NOT_EQUAL_TO", (parse_value(1), parse_value(2))),), evaluation="AnyOf")
    with pytest.raises(UnsatisfiableNegatedUnion):
        plan_expansion(rule, details)


def pf_policy(conditions):
    return parse_mlp(
        {
            "nsfName": "PF",
            "rules": [
                {
                    "id": "p1",
                    "externalData": {"priority": "1"},
                    "conditions": conditions,
                    "actions": [{"capability": "AcceptActionCapability"}],
                }
            ],
        }
    )


def test_pf_merge_group(catalogue):
    policy = pf_policy(
        [cond(PROTO, ["tcp"]), cond("NumberConnectionsConditionCapability", [10]), cond("LimitSAddrConditionCapability", [1])]
    )
    line = translate(policy, catalogue.resolved("PF")).strip()
    assert line == "pass proto tcp keep state (max-src-conn 10, max-src-nodes 1)"


def test_pf_two_groups_share_one_prefix(catalogue):
    policy = pf_policy(
        [
            cond("NumberConnectionsConditionCapability", [10]),
            cond("LimitSAddrConditionCapability", [1]),
            cond("MaxRateConnectionsConditionCapability", ["15/5"]),
        ]
    )
    line = translate(policy, catalogue.resolved("PF")).strip()
    assert line.count("keep state") == 1
    assert line.endswith("keep state (max-src-conn 10, max-src-nodes 1) (max-src-conn-rate 15/5)")


def test_pf_incomplete_merge_group(catalogue):
    policy = pf_policy([cond("NumberConnectionsConditionCapability", [10])])
    with pytest.raises(IncompleteMergeGroup) as err:
        translate(policy, catalogue.resolved("PF"))
    assert "LimitSAddrConditionCapability" in err.value.detail["missing"]


def test_auto_satisfy_injects_single_valued_dependency(catalogue):
    policy = iptables_policy([cond("TcpFlagsConditionCapability", ["SYN"])])
    resolved = catalogue.resolved("IpTables")
    with pytest.raises(DependencyViolation):
        translate(policy, resolved)
    line = translate(policy, resolved, auto_satisfy_dependencies=True).splitlines()[0]
    assert line == "iptables -A INPUT -p tcp --tcp-flags ALL SYN -j DROP"


def test_auto_satisfy_leaves_multi_valued_dependency(catalogue):
    policy = iptables_policy([cond(SPORT, [80])])
    with pytest.raises(DependencyViolation):
        translate(policy, catalogue.resolved("IpTables"), auto_satisfy_dependencies=True)


def test_translation_follows_priority_order(catalogue):
    rules = []
    for prio, port in ((3, 30), (1, 10), (2, 20)):
        rules.append(
            {
                "id": f"r{prio}",
                "externalData": {"priority": str(prio)},
                "conditions": [cond(PROTO, ["tcp"]), cond(DPORT, [port])],
                "actions": [{"capability": "AppendRuleActionCapability", "value": "INPUT"}, {"capability": "AcceptActionCapability"}],
            }
        )
    lines = translate(iptables_policy(None, rules=rules), catalogue.resolved("IpTables")).splitlines()
    assert [line.split("--dport ")[1].split()[0] for line in lines] == ["10", "20", "30"]


@settings(max_examples=150)
@given(st.randoms(use_true_random=False))
def test_expansion_preserves_union_semantics(rng):
    case = random_case(rng)
    mismatches, count_ok, _ = check_case(case)
    assert mismatches == 0
    assert count_ok


@settings(max_examples=60)
@given(st.randoms(use_true_random=False))
def test_expansion_is_minimal_for_conjunctive_rules(rng):
    case = random_case(rng)
    case["evaluation"] = "AllOf"
    if analytic_count(case) > 16:
        case["conditions"] = case["conditions"][:1]
    # an unsatisfiable rule is preserved by any subset, so minimality is vacuous
    assume(any(rule_holds(case["conditions"], p, case["evaluation"]) for p in UNIVERSE))
    assert minimal(case)


def test_disjunctive_product_is_not_minimal():
    """Under AnyOf the product keeps every fragment semantically, but pairing
    values would already cover the rule; the product count is kept on purpose."""
    case = {
        "evaluation": "AnyOf",
        "joinable": {SRC: False, DPORT: False, PROTO: False},
        "conditions": [(SRC, "EQUAL", ["10.0.0.1", "10.0.0.2"]), (DPORT, "EQUAL", [1, 2])],
    }
    mismatches, count_ok, fragments = check_case(case)
    assert mismatches == 0 and count_ok and len(fragments) == 4
    assert not minimal(case)
    assert preserves(case, [fragments[0], fragments[3]])


def test_expansion_decisions_name_expanded_conditions():
    case = {
        "evaluation": "AllOf",
        "joinable": {SRC: False, DPORT: True, PROTO: False},
        "conditions": [(SRC, "EQUAL", ["10.0.0.1", "10.0.0.2"]), (DPORT, "EQUAL", [1, 2, 3]), (PROTO, "EQUAL", ["TCP"])],
    }
    mismatches, count_ok, fragments = check_case(case)
    assert mismatches == 0 and count_ok and len(fragments) == 2


def _line_matches(line, packet):
    tokens = line.split()
    fields = {tokens[i]: tokens[i + 1] for i in range(len(tokens) - 1) if tokens[i].startswith("-")}
    return (
        fields["-p"] == packet[PROTO]
        and int(fields["--dport"]) == packet[DPORT]
        and fields["-s"] == packet[SRC]
    )


def test_expanded_translation_matches_policy_semantics(catalogue):
    """Reading the emitted lines back as match rules gives the policy's verdicts."""
    resolved = without_concatenator(catalogue.resolved("IpTables"), DPORT)
    policy = iptables_policy([cond(PROTO, ["TCP"]), cond(DPORT, [1, 2, 3]), cond(SRC, ["10.0.0.1", "10.0.0.3"])])
    lines = translate(policy, resolved).splitlines()
    assert len(lines) == 6
    rng = random.Random(3)
    for _ in range(300):
        packet = {PROTO: rng.choice(["TCP", "UDP"]), DPORT: rng.randint(0, 5), SRC: f"10.0.0.{rng.randint(1, 4)}"}
        hit = match_policy(policy, packet).kind == "rule"
        assert hit == any(_line_matches(line, packet) for line in lines)


@given(st.lists(st.integers(1, 20), min_size=1, max_size=8))
def test_fmr_line_order_follows_priority(priorities):
    from capforge.fixtures import default_catalogue

    rules = []
    for index, prio in enumerate(priorities):
        rules.append(
            {
                "id": f"r{index}",
                "externalData": {"priority": str(prio)},
                "conditions": [cond(PROTO, ["tcp"]), cond(DPORT, [1000 + index])],
                "actions": [{"capability": "AppendRuleActionCapability", "value": "INPUT"}, {"capability": "AcceptActionCapability"}],
            }
        )
    lines = translate(iptables_policy(None, rules=rules), default_catalogue().resolved("IpTables")).splitlines()
    position = {int(line.split("--dport ")[1].split()[0]) - 1000: i for i, line in enumerate(lines)}
    for r in range(len(priorities)):
        for s in range(len(priorities)):
            if priorities[r] < priorities[s]:
                assert position[r] < position[s]
            elif priorities[r] == priorities[s] and r < s:
                assert position[r] < position[s]
