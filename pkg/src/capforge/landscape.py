"""Network landscape (nodes, links, named entities) and high-level policy statements."""

from __future__ import annotations

import ipaddress
import json
from collections import deque
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from pathlib import Path
from types import MappingProxyType

from .errors import DanglingLink, NoPath, ParseError, PathLimitExceeded, UnknownEntity, UnknownNsf

NODE_KINDS = ("host", "subnet", "nsf-node")
PATH_LIMIT = 10_000
ANY = "any"


@dataclass(frozen=True)
class Node:
    id: str
    kind: str
    nsfs: tuple[str, ...] = ()
    address: str | None = None

    def to_doc(self) -> dict:
        doc: dict = {"id": self.id, "kind": self.kind, "nsfs": list(self.nsfs)}
        if self.address is not None:
            doc["address"] = self.address
        return doc


@dataclass(frozen=True)
class Entity:
    name: str
    node: str
    address: str

    @property
    def network(self) -> ipaddress.IPv4Network:
        return ipaddress.IPv4Network(self.address, strict=False)


@dataclass(frozen=True)
class Landscape:
    nodes: Mapping[str, Node]
    links: frozenset[frozenset[str]]
    entities: Mapping[str, Entity]
    traffic_classes: Mapping[str, Entity] = field(default_factory=dict)
    boundary: str | None = None

    def __post_init__(self) -> None:
        adj: dict[str, set[str]] = {n: set() for n in self.nodes}
        for link in self.links:
            a, b = sorted(link)
            adj[a].add(b)
            adj[b].add(a)
        object.__setattr__(self, "_adjacency", MappingProxyType({n: tuple(sorted(v)) for n, v in adj.items()}))

    def neighbours(self, node: str) -> tuple[str, ...]:
        return self._adjacency[node]  # type: ignore[attr-defined]

    def resolve(self, name: str) -> Entity:
        """An entity, a traffic class, ``any`` or an IPv4/CIDR literal."""
        if name in self.entities:
            return self.entities[name]
        if name in self.traffic_classes:
            return self.traffic_classes[name]
        if name == ANY and self.boundary is not None:
            return Entity(ANY, self.boundary, "0.0.0.0/0")
        try:
            net = ipaddress.IPv4Network(name, strict=False)
        except ValueError:
            raise UnknownEntity(f"unknown entity {name!r}", entity=name) from None
        holders = [e for e in self.entities.values() if net.subnet_of(e.network)]
        if holders:
            best = max(holders, key=lambda e: (e.network.prefixlen, e.name))
            return Entity(name, best.node, name)
        if self.boundary is None:
            raise UnknownEntity(f"address {name} is outside every known entity and there is no boundary node", entity=name)
        return Entity(name, self.boundary, name)

    def with_nsf(self, node_id: str, nsf_id: str) -> Landscape:
        node = self.nodes[node_id]
        if nsf_id in node.nsfs:
            return self
        nodes = dict(self.nodes)
        nodes[node_id] = replace(node, nsfs=node.nsfs + (nsf_id,))
        return replace(self, nodes=MappingProxyType(nodes))

    def nsf_nodes(self) -> list[str]:
        return sorted(n for n, node in self.nodes.items() if node.nsfs)

    def to_doc(self) -> dict:
        doc: dict = {
            "nodes": [self.nodes[n].to_doc() for n in sorted(self.nodes)],
            "links": sorted(sorted(link) for link in self.links),
            "entities": {k: {"node": e.node, "address": e.address} for k, e in sorted(self.entities.items())},
        }
        if self.traffic_classes:
            doc["trafficClasses"] = {k: {"node": e.node, "address": e.address} for k, e in sorted(self.traffic_classes.items())}
        if self.boundary is not None:
            doc["boundary"] = self.boundary
        return doc


@dataclass(frozen=True)
class Hlp:
    subject: str
    action: str
    object: str
    options: Mapping[str, object] = field(default_factory=dict)

    def to_doc(self) -> dict:
        doc: dict = {"subject": self.subject, "action": self.action, "object": self.object}
        if self.options:
            doc["options"] = dict(self.options)
        return doc


# -- loading -----------------------------------------------------------------


def _read(document: Mapping | list | str | Path) -> object:
    if isinstance(document, (Mapping, list)):
        return document
    path = Path(document)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ParseError("file not found", path=str(path)) from None
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=str(path), line=exc.lineno, column=exc.colno) from None


def _entities(raw: object, path: str, nodes: Mapping[str, Node]) -> dict[str, Entity]:
    if not isinstance(raw, dict):
        raise ParseError("expected an object", path=path)
    out = {}
    for name, spec in raw.items():
        if not isinstance(spec, dict) or not isinstance(spec.get("node"), str) or not isinstance(spec.get("address"), str):
            raise ParseError("entity needs string fields node and address", path=f"{path}.{name}")
        if spec["node"] not in nodes:
            raise DanglingLink(f"entity {name!r} is attached to unknown node {spec['node']!r}", entity=name, node=spec["node"])
        try:
            ipaddress.IPv4Network(spec["address"], strict=False)
        except ValueError:
            raise ParseError(f"malformed address {spec['address']!r}", path=f"{path}.{name}.address") from None
        out[name] = Entity(name, spec["node"], spec["address"])
    return out


def load_landscape(document: Mapping | str | Path, catalogue=None) -> Landscape:
    """Parse a landscape document; installed NSFs are checked when a catalogue is given."""
    doc = _read(document)
    if not isinstance(doc, dict):
        raise ParseError("landscape must be an object", path="landscape")
    nodes: dict[str, Node] = {}
    raw_nodes = doc.get("nodes", [])
    if not isinstance(raw_nodes, list):
        raise ParseError("nodes must be a list", path="landscape.nodes")
    for i, n in enumerate(raw_nodes):
        where = f"landscape.nodes[{i}]"
        if not isinstance(n, dict) or not isinstance(n.get("id"), str) or not n["id"]:
            raise ParseError("node needs a non-empty string id", path=where)
        kind = n.get("kind", "nsf-node" if n.get("nsfs") else "subnet")
        if kind not in NODE_KINDS:
            raise ParseError(f"node kind must be one of {NODE_KINDS}", path=f"{where}.kind")
        nsfs = n.get("nsfs", [])
        if not isinstance(nsfs, list) or not all(isinstance(x, str) for x in nsfs):
            raise ParseError("nsfs must be a list of strings", path=f"{where}.nsfs")
        if catalogue is not None:
            for nsf in nsfs:
                if nsf not in catalogue.nsfs:
                    raise UnknownNsf(f"node {n['id']!r} installs unknown NSF {nsf!r}", nsf=nsf, node=n["id"])
        address = n.get("address")
        if address is not None:
            try:
                ipaddress.IPv4Address(address)
            except (ValueError, TypeError):
                raise ParseError(f"malformed node address {address!r}", path=f"{where}.address") from None
        if n["id"] in nodes:
            raise ParseError(f"duplicate node id {n['id']!r}", path=where)
        nodes[n["id"]] = Node(n["id"], kind, tuple(nsfs), address)
    links = set()
    for i, link in enumerate(doc.get("links", [])):
        if not isinstance(link, list) or len(link) != 2 or not all(isinstance(x, str) for x in link):
            raise ParseError("link must be a pair of node ids", path=f"landscape.links[{i}]")
        for end in link:
            if end not in nodes:
                raise DanglingLink(f"link {link} references unknown node {end!r}", node=end)
        if link[0] != link[1]:
            links.add(frozenset(link))
    boundary = doc.get("boundary")
    if boundary is not None and boundary not in nodes:
        raise DanglingLink(f"boundary references unknown node {boundary!r}", node=boundary)
    return Landscape(
        nodes=MappingProxyType(nodes),
        links=frozenset(links),
        entities=MappingProxyType(_entities(doc.get("entities", {}), "landscape.entities", nodes)),
        traffic_classes=MappingProxyType(_entities(doc.get("trafficClasses", {}), "landscape.trafficClasses", nodes)),
        boundary=boundary,
    )


def load_hlps(document: Mapping | list | str | Path) -> list[Hlp]:
    doc = _read(document)
    if isinstance(doc, dict):
        doc = doc.get("hlps", doc.get("policies"))
    if not isinstance(doc, list):
        raise ParseError("HLP document must be a list of statements", path="hlps")
    out = []
    for i, h in enumerate(doc):
        where = f"hlps[{i}]"
        if not isinstance(h, dict):
            raise ParseError("statement must be an object", path=where)
        for key in ("subject", "action", "object"):
            if not isinstance(h.get(key), str) or not h[key]:
                raise ParseError(f"{key} must be a non-empty string", path=f"{where}.{key}")
        extra = set(h) - {"subject", "action", "object", "options"}
        if extra:
            raise ParseError(f"unknown field {sorted(extra)[0]!r}", path=where)
        options = h.get("options", {})
        if not isinstance(options, dict):
            raise ParseError("options must be an object", path=f"{where}.options")
        out.append(Hlp(h["subject"], h["action"], h["object"], MappingProxyType(dict(options))))
    return out


# -- graph analysis ----------------------------------------------------------


def node_paths(landscape: Landscape, src: str, dst: str, limit: int = PATH_LIMIT) -> list[tuple[str, ...]]:
    """All simple paths between two nodes, shortest first, ties lexicographic."""
    if src == dst:
        return [(src,)]
    found: list[tuple[str, ...]] = []
    path = [src]
    on_path = {src}
    stack = [iter(landscape.neighbours(src))]
    while stack:
        nxt = next(stack[-1], None)
        if nxt is None:
            stack.pop()
            on_path.discard(path.pop())
            continue
        if nxt in on_path:
            continue
        if nxt == dst:
            found.append(tuple(path) + (dst,))
            if len(found) > limit:
                raise PathLimitExceeded(f"more than {limit} simple paths between {src} and {dst}", limit=limit)
            continue
        path.append(nxt)
        on_path.add(nxt)
        stack.append(iter(landscape.neighbours(nxt)))
    return sorted(found, key=lambda p: (len(p), p))


def _reachable(landscape: Landscape, src: str, dst: str, removed: str | None = None) -> bool:
    seen = {src}
    queue = deque([src])
    while queue:
        cur = queue.popleft()
        if cur == dst:
            return True
        for n in landscape.neighbours(cur):
            if n != removed and n not in seen:
                seen.add(n)
                queue.append(n)
    return False


def node_cut(landscape: Landscape, src: str, dst: str) -> frozenset[str]:
    """Interior nodes lying on every simple path: exactly those whose removal
    disconnects ``src`` from ``dst``."""
    if not _reachable(landscape, src, dst):
        raise NoPath(f"no path between {src} and {dst}", src=src, dst=dst)
    if src == dst:
        return frozenset()
    return frozenset(n for n in landscape.nodes if n not in (src, dst) and not _reachable(landscape, src, dst, removed=n))


def paths(landscape: Landscape, src_entity: str, dst_entity: str, limit: int = PATH_LIMIT) -> list[tuple[str, ...]]:
    return node_paths(landscape, landscape.resolve(src_entity).node, landscape.resolve(dst_entity).node, limit)


def cut_nodes(landscape: Landscape, src_entity: str, dst_entity: str) -> frozenset[str]:
    return node_cut(landscape, landscape.resolve(src_entity).node, landscape.resolve(dst_entity).node)
