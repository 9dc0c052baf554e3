"""Independent reference implementations used to check the library."""

import ipaddress
import itertools

import networkx as nx

# Hand-listed from the fixture catalogue document, not computed by the library.
GENERIC_FILTER = {
    "IpProtocolTypeConditionCapability",
    "IpSourceAddressConditionCapability",
    "IpDestinationAddressConditionCapability",
    "SourcePortConditionCapability",
    "DestinationPortConditionCapability",
    "AcceptActionCapability",
    "RejectActionCapability",
    "DefaultActionCapabilitySpec",
}
PF_SHARED_WITH_IPTABLES = GENERIC_FILTER | {
    "TcpFlagsConditionCapability",
    "InterfaceConditionCapability",
    "NumberConnectionsConditionCapability",
    "LimitSAddrConditionCapability",
}
PF_ONLY = {
    "StateInterfaceBoundConditionCapability",
    "OutputInterfaceConditionCapability",
    "InputInterfaceConditionCapability",
    "MaxRateConnectionsConditionCapability",
}

ADDRESSES = ["10.0.0.1", "10.0.0.2", "10.0.0.3", "10.0.0.4"]
PORTS = list(range(16))
PROTOCOLS = ["TCP", "UDP", "ICMP"]


def literal_set(raw_values):
    """Enumerate document literals (singles, ``{"range": [..]}``, CIDR) as a set of plain keys."""
    out = set()
    for raw in raw_values:
        if isinstance(raw, dict):
            lo, hi = raw["range"]
            if isinstance(lo, str):
                a, b = int(ipaddress.IPv4Address(lo)), int(ipaddress.IPv4Address(hi))
                out.update(str(ipaddress.IPv4Address(i)) for i in range(a, b + 1))
            else:
                out.update(range(lo, hi + 1))
        elif isinstance(raw, str) and "/" in raw:
            out.update(str(h) for h in ipaddress.IPv4Network(raw, strict=False))
        else:
            out.add(raw)
    return out


def condition_holds(operation, raw_values, observed):
    hit = observed in literal_set(raw_values)
    return hit if operation == "EQUAL" else not hit


def rule_holds(conditions, packet, evaluation="AllOf"):
    """``conditions`` is a list of (capability, operation, raw values)."""
    results = [condition_holds(op, vals, packet[cap]) for cap, op, vals in conditions]
    return all(results) if evaluation == "AllOf" else any(results)


def cartesian(value_lists):
    return list(itertools.product(*value_lists))


def small_universe():
    for src, dst, sport, dport, proto in itertools.product(ADDRESSES, ADDRESSES, PORTS, PORTS, PROTOCOLS):
        yield {
            "IpSourceAddressConditionCapability": src,
            "IpDestinationAddressConditionCapability": dst,
            "SourcePortConditionCapability": sport,
            "DestinationPortConditionCapability": dport,
            "IpProtocolTypeConditionCapability": proto,
        }


def brute_cut(edges, nodes, src, dst):
    g = nx.Graph()
    g.add_nodes_from(nodes)
    g.add_edges_from(edges)
    if src == dst:
        return set(), [[src]]
    all_paths = list(nx.all_simple_paths(g, src, dst))
    if not all_paths:
        return None, []
    interior = [set(p[1:-1]) for p in all_paths]
    return set.intersection(*interior), all_paths


def min_hitting_set_size(sets):
    universe = sorted(set().union(*sets))
    for k in range(len(universe) + 1):
        for combo in itertools.combinations(universe, k):
            if all(s & set(combo) for s in sets):
                return k
    return None
