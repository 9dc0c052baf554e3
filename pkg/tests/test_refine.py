import ipaddress
import random

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from capforge.catalogue import catalogue_from_docs
from capforge.errors import AlreadyEnforceable, NoCapableNsfInCatalogue, UnknownVerb
from capforge.fixtures import load_json
from capforge.landscape import Hlp, cut_nodes, load_landscape
from capforge.mlp import errors_only, match_policy, validate_mlp
from capforge.refine import (
    Control,
    candidate_controls,
    propose_additions,
    refine,
    refine_one,
    required_capabilities,
    select_controls,
)

from oracles import min_hitting_set_size

SRC = "IpSourceAddressConditionCapability"
DST = "IpDestinationAddressConditionCapability"
DPORT = "DestinationPortConditionCapability"
REJECT = "RejectActionCapability"


def controls_doc(cands):
    return [[f"{c.node} ({c.nsf})" for c in p.controls] for p in cands.per_path]


def test_required_capabilities(mapping):
    deny = Hlp("a", "is_not_authorized_to_access", "b")
    assert required_capabilities(deny, mapping) == {SRC, DST, REJECT}
    with_ports = Hlp("a", "is_authorized_to_access", "b", {"ports": [80]})
    assert {DPORT, "IpProtocolTypeConditionCapability"} <= required_capabilities(with_ports, mapping)
    integrity = required_capabilities(Hlp("a", "protect_integrity", "b"), mapping)
    assert {"ChannelProtectActionCapability", "IntegrityAlgorithmActionCapability"} <= integrity
    with pytest.raises(UnknownVerb):
        required_capabilities(Hlp("a", "levitate", "b"), mapping)


def test_table_candidates(reference_landscape, reference_hlps, catalogue, mapping):
    rows = [candidate_controls(h, reference_landscape, catalogue, mapping) for h in reference_hlps]
    assert controls_doc(rows[0]) == [["firewall-1 (IpTables)"], ["firewall-1 (IpTables)", "firewall-2 (IpTables)"]]
    assert sorted(controls_doc(rows[1])[0]) == ["firewall-1 (XFRM)", "vpn-gateway-1 (StrongSwan)"]
    assert len(rows[1].per_path) == 1
    assert controls_doc(rows[2]) == [["firewall-1 (IpTables)", "firewall-2 (IpTables)"], ["firewall-2 (IpTables)"]]


def test_row_three_selection(reference_landscape, reference_hlps, catalogue, mapping):
    cands = candidate_controls(reference_hlps[2], reference_landscape, catalogue, mapping)
    assert select_controls(cands, "min_controls").controls == (Control("firewall-2", "IpTables"),)
    both = select_controls(cands, "defense_in_depth").controls
    assert both == (Control("firewall-1", "IpTables"), Control("firewall-2", "IpTables"))
    assert min_hitting_set_size([{c.node for c in p.controls} for p in cands.per_path]) == 1


def test_generated_mlps_validate(reference_landscape, reference_hlps, catalogue, mapping):
    result = refine(reference_hlps, reference_landscape, catalogue, mapping)
    assert [r.status for r in result.results] == ["enforced"] * 3
    assert sorted(result.mlps) == ["firewall-1:IpTables", "firewall-1:XFRM", "firewall-2:IpTables", "vpn-gateway-1:StrongSwan"]
    for key, policy in result.mlps.items():
        assert errors_only(validate_mlp(policy, catalogue.resolved(policy.nsf_name))) == [], key


def _rejects(policy, catalogue, src, dst):
    outcome = match_policy(policy, {SRC: src, DST: dst}, catalogue.resolved(policy.nsf_name))
    return outcome.kind == "rule" and any(a.capability == REJECT for a in outcome.actions)


def test_malicious_user_denied_on_every_path(reference_landscape, reference_hlps, catalogue, mapping):
    result = refine(reference_hlps, reference_landscape, catalogue, mapping)
    row = result.results[2]
    for host in ("203.0.113.1", "203.0.113.77", "203.0.113.254"):
        for p in row.candidates.per_path:
            enforcing = [c for c in row.selection.controls if c.node in p.path]
            assert any(_rejects(result.mlps[c.key], catalogue, host, "10.0.3.10") for c in enforcing)


def test_unrelated_pairs_are_not_rejected(reference_landscape, reference_hlps, catalogue, mapping):
    result = refine(reference_hlps, reference_landscape, catalogue, mapping)
    policy = result.mlps["firewall-2:IpTables"]
    assert not _rejects(policy, catalogue, "10.0.1.10", "10.0.3.10")
    assert not _rejects(policy, catalogue, "203.0.113.1", "10.0.1.10")


def test_allow_with_ports(reference_landscape, catalogue, mapping):
    res = refine_one(Hlp("Bob", "is_authorized_to_access", "internet_traffic", {"ports": [80]}), 1, reference_landscape, catalogue, mapping)
    assert res.status == "enforced"
    rule = res.mlps["firewall-1:IpTables"].rules[0]
    by_cap = {c.capability: c for c in rule.conditions}
    assert [v.to_doc() for v in by_cap[DPORT].values] == [80]
    assert rule.external_data["priority"] == "1"


def test_protect_integrity_uses_endpoint_pair(reference_landscape, reference_hlps, catalogue, mapping):
    res = refine_one(reference_hlps[1], 2, reference_landscape, catalogue, mapping)
    assert res.status == "enforced"
    assert [[a.key, b.key] for a, b in res.selection.pairs] == [["vpn-gateway-1:StrongSwan", "firewall-1:XFRM"]]
    for key in ("vpn-gateway-1:StrongSwan", "firewall-1:XFRM"):
        caps = {a.capability for a in res.mlps[key].rules[0].actions}
        assert {"ChannelProtectActionCapability", "IntegrityAlgorithmActionCapability"} <= caps


def test_l7_deny_gets_proposal(reference_landscape, catalogue, mapping):
    hlp = Hlp("Bob", "is_not_authorized_to_browse", "internet_traffic", {"url_pattern": [".*pool.*"]})
    res = refine_one(hlp, 1, reference_landscape, catalogue, mapping)
    assert res.status == "unenforceable_with_proposal"
    assert [(p.node, p.nsf) for p in res.proposals] == [("firewall-1", "genericL7Filter")]
    assert "firewall-1" in cut_nodes(reference_landscape, "Bob", "internet_traffic")


def test_proposal_preconditions(reference_landscape, reference_hlps, catalogue, mapping):
    with pytest.raises(AlreadyEnforceable):
        propose_additions(reference_hlps[2], reference_landscape, catalogue, mapping)
    doc = load_json("catalogue.json")
    empty = catalogue_from_docs([("caps", {"capabilities": doc["capabilities"], "resolutionStrategies": doc.get("resolutionStrategies", [])})])
    hlp = Hlp("Bob", "is_not_authorized_to_browse", "internet_traffic", {"url_pattern": ["x"]})
    with pytest.raises(NoCapableNsfInCatalogue):
        propose_additions(hlp, reference_landscape, empty, mapping)


def test_interactive_callback(reference_landscape, reference_hlps, catalogue, mapping):
    asked = []

    def decide(kind, choices):
        asked.append(kind)
        return choices[-1]

    row1 = refine_one(reference_hlps[0], 1, reference_landscape, catalogue, mapping, "interactive", decide)
    assert asked == ["path"]
    assert {c.node for c in row1.selection.controls} == {"firewall-1", "firewall-2"}
    pending = refine_one(reference_hlps[0], 1, reference_landscape, catalogue, mapping, "interactive")
    assert pending.status == "needs_decision"


@st.composite
def small_landscapes(draw):
    rng = random.Random(draw(st.integers(0, 10**6)))
    n = draw(st.integers(3, 9))
    names = [f"n{i}" for i in range(n)]
    g = nx.gnp_random_graph(n, draw(st.floats(0.2, 0.6)), seed=rng.randrange(10**6))
    # keep the endpoints connected through a spine
    edges = {tuple(sorted((names[a], names[b]))) for a, b in g.edges()} | {(names[i], names[i + 1]) for i in range(0, n - 1, 2)}
    edges |= {(names[i], names[i + 1]) for i in range(1, n - 1, 2) if rng.random() < 0.5}
    spine = nx.Graph(list(edges))
    spine.add_nodes_from(names)
    if not nx.has_path(spine, names[0], names[-1]):
        edges.add((names[0], names[-1]))
    nodes = []
    for i, name in enumerate(names):
        filt = 0 < i < n - 1 and rng.random() < 0.75
        nodes.append({"id": name, "kind": "nsf-node" if filt else "subnet", "nsfs": ["IpTables"] if filt else [], **({"address": f"10.9.0.{i + 1}"} if filt else {})})
    doc = {
        "nodes": nodes,
        "links": [list(e) for e in sorted(edges)],
        "entities": {"S": {"node": names[0], "address": "10.1.0.1"}, "O": {"node": names[-1], "address": "10.2.0.1"}},
    }
    return doc, edges, names


@settings(max_examples=120)
@given(small_landscapes(), st.sampled_from(["min_controls", "defense_in_depth"]))
def test_deny_soundness_and_completeness(case, strategy):
    from capforge.fixtures import data_path, default_catalogue
    from capforge.refine import load_mapping

    doc, edges, names = case
    catalogue = default_catalogue()
    mapping = load_mapping(data_path("mapping.json"))
    land = load_landscape(doc, catalogue)
    g = nx.Graph(list(edges))
    g.add_nodes_from(names)
    all_paths = [set(p) for p in nx.all_simple_paths(g, names[0], names[-1])] if names[0] != names[-1] else []
    filters = {n["id"] for n in doc["nodes"] if n["nsfs"]}
    coverable = all(p & filters for p in all_paths)

    res = refine_one(Hlp("S", "is_not_authorized_to_access", "O"), 1, land, catalogue, mapping, strategy)
    assert (res.status == "enforced") == coverable
    if not coverable:
        assert res.status == "unenforceable_with_proposal"
        return
    selected = {c.node for c in res.selection.controls}
    on_paths = set().union(*all_paths)
    # soundness: selected nodes own the capabilities and lie on some path
    assert selected <= filters & on_paths
    # completeness: every simple path crosses a selected node that rejects the flow
    for p in all_paths:
        hit = [c for c in res.selection.controls if c.node in p]
        assert any(_rejects(res.mlps[c.key], catalogue, "10.1.0.1", "10.2.0.1") for c in hit)
    everything = select_controls(res.candidates, "defense_in_depth").controls
    fewest = select_controls(res.candidates, "min_controls").controls
    assert len(fewest) <= len(everything)
    assert len(fewest) >= min_hitting_set_size([p & filters for p in all_paths])
    unrelated = str(ipaddress.IPv4Address("10.3.0.1"))
    for c in res.selection.controls:
        assert not _rejects(res.mlps[c.key], catalogue, unrelated, "10.2.0.1")
