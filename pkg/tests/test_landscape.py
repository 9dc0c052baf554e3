import random

import pytest
from hypothesis import given, settings, strategies as st

from capforge.errors import DanglingLink, NoPath, ParseError, PathLimitExceeded, UnknownEntity, UnknownNsf
from capforge.landscape import ANY, cut_nodes, load_hlps, load_landscape, node_cut, node_paths, paths

from oracles import brute_cut


def graph(edges, nodes=None, **extra):
    names = sorted(nodes or {n for e in edges for n in e})
    return load_landscape({"nodes": [{"id": n, "kind": "subnet"} for n in names], "links": [list(e) for e in edges], **extra})


def test_reference_landscape_loads(reference_landscape):
    subnets = [n for n in reference_landscape.nodes.values() if n.kind == "subnet"]
    assert len(subnets) == 10
    assert reference_landscape.nodes["firewall-1"].nsfs == ("IpTables", "XFRM")
    assert reference_landscape.boundary == "internet"


def test_isolated_node_has_no_path():
    land = graph([("a", "b")], nodes={"a", "b", "c"})
    assert node_paths(land, "a", "c") == []
    with pytest.raises(NoPath):
        node_cut(land, "a", "c")


def test_dangling_link_is_rejected():
    with pytest.raises(DanglingLink):
        load_landscape({"nodes": [{"id": "a", "kind": "subnet"}], "links": [["a", "ghost"]]})


def test_entity_on_unknown_node_is_rejected():
    with pytest.raises(DanglingLink):
        load_landscape({"nodes": [{"id": "a", "kind": "subnet"}], "links": [], "entities": {"x": {"node": "b", "address": "10.0.0.1"}}})


def test_unknown_nsf_and_bad_kind(catalogue):
    doc = {"nodes": [{"id": "a", "kind": "nsf-node", "nsfs": ["NoSuchThing"]}], "links": []}
    with pytest.raises(UnknownNsf):
        load_landscape(doc, catalogue)
    with pytest.raises(ParseError):
        load_landscape({"nodes": [{"id": "a", "kind": "router"}], "links": []})


def test_bob_to_internet_has_two_paths(reference_landscape):
    found = paths(reference_landscape, "Bob", ANY)
    assert found == [
        ("net-bob", "firewall-1", "internet"),
        ("net-bob", "firewall-1", "net-dmz", "firewall-2", "net-wan2", "vpn-gateway-2", "internet"),
    ]
    assert cut_nodes(reference_landscape, "Bob", ANY) == {"firewall-1"}


def test_same_node_path(reference_landscape):
    assert paths(reference_landscape, "Alice", "Alice") == [("net-alice",)]
    assert cut_nodes(reference_landscape, "Alice", "Alice") == frozenset()


def test_address_literals_resolve_to_holding_entity(reference_landscape):
    assert reference_landscape.resolve("10.0.8.7").node == "net-lab"
    assert reference_landscape.resolve("192.0.2.1").node == "internet"
    with pytest.raises(UnknownEntity):
        reference_landscape.resolve("nobody")


def test_cut_on_diamond_is_empty():
    land = graph([("s", "a"), ("s", "b"), ("a", "t"), ("b", "t")])
    assert node_cut(land, "s", "t") == frozenset()


def test_cut_on_line_is_interior():
    land = graph([("s", "a"), ("a", "b"), ("b", "t")])
    assert node_cut(land, "s", "t") == {"a", "b"}


def test_cut_with_bridge_node():
    land = graph([("s", "a"), ("s", "b"), ("a", "m"), ("b", "m"), ("m", "t")])
    assert node_cut(land, "s", "t") == {"m"}


def test_path_limit():
    # complete graph on 8 nodes has far more than 50 simple paths between two nodes
    names = [f"n{i}" for i in range(8)]
    edges = [(a, b) for i, a in enumerate(names) for b in names[i + 1 :]]
    with pytest.raises(PathLimitExceeded):
        node_paths(graph(edges), "n0", "n7", limit=50)


def test_paths_are_ordered_shortest_first(reference_landscape):
    found = paths(reference_landscape, "Malicious_User", "Alice")
    assert [len(p) for p in found] == sorted(len(p) for p in found)


def test_hlp_loading(reference_hlps):
    assert len(reference_hlps) == 3
    with pytest.raises(ParseError):
        load_hlps([{"subject": "a", "action": "x"}])
    with pytest.raises(ParseError):
        load_hlps([{"subject": "a", "action": "x", "object": "b", "colour": "red"}])


@st.composite
def random_graphs(draw):
    n = draw(st.integers(2, 12))
    names = [f"v{i}" for i in range(n)]
    rng = random.Random(draw(st.integers(0, 10**6)))
    density = draw(st.floats(0.1, 0.6))
    edges = [(a, b) for i, a in enumerate(names) for b in names[i + 1 :] if rng.random() < density]
    src, dst = draw(st.sampled_from(names)), draw(st.sampled_from(names))
    return names, edges, src, dst


@settings(max_examples=200)
@given(random_graphs())
def test_cut_matches_brute_force(case):
    names, edges, src, dst = case
    land = graph(edges, nodes=set(names))
    expected_cut, expected_paths = brute_cut(edges, names, src, dst)
    if expected_cut is None:
        assert node_paths(land, src, dst) == []
        with pytest.raises(NoPath):
            node_cut(land, src, dst)
        return
    assert node_cut(land, src, dst) == expected_cut
    assert sorted(node_paths(land, src, dst, limit=10**6)) == sorted(tuple(p) for p in expected_paths)
