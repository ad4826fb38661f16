"""Time-versioned property graph of managed resources.

Nodes and edges carry half-open validity intervals [from, to); every
query is scoped to a timestamp so that lookups reflect what existed at
alert time.  The node/edge taxonomy is the topology-service vocabulary
the engine is deployed against.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional

from .errors import DanglingEdge, UnknownNode, UnknownType

logger = logging.getLogger(__name__)

OPEN_END = None  # open-ended validity

NODE_TYPES = frozenset({
    "application", "backplane", "bridge", "card", "chassis", "command",
    "component", "container", "cpu", "database", "directory", "disk",
    "emailaddress", "event", "fan", "file", "firewall", "fqdn", "group",
    "host", "hsrp", "hub", "ipaddress", "loadbalancer", "location",
    "networkaddress", "networkinterface", "operatingsystem", "organization",
    "path", "person", "process", "product", "psu", "router", "rsm",
    "sector", "server", "service", "serviceaccesspoint", "slackchannel",
    "snmpsystem", "status", "storage", "subnet", "switch", "tcpudpport",
    "variable", "vlan", "volume", "vpn", "vfr",
})

EDGE_TYPES_BY_CATEGORY = {
    "aggregation": frozenset({"contains", "federates", "members"}),
    "association": frozenset({
        "aliasOf", "assignedTo", "attachedTo", "classifies", "configures",
        "deployedTo", "exposes", "has", "implements", "locatedAt", "manages",
        "monitors", "movedTo", "origin", "owns", "rates", "resolvesTo",
        "realizes", "segregates", "uses",
    }),
    "data flow": frozenset({
        "accessedVia", "bindsTo", "communicatesWith", "connectedTo",
        "downlinkTo", "reachableVia", "receives", "routes", "routesVia",
        "loadBalances", "resolved", "resolves", "sends", "traverses",
        "uplinkTo",
    }),
    "dependency": frozenset({"dependsOn", "runsOn"}),
    "metaData": frozenset({"metadataFor"}),
}

EDGE_TYPES = frozenset().union(*EDGE_TYPES_BY_CATEGORY.values())

# Lookup kinds whose values compare case-insensitively (DNS semantics).
_CASEFOLD_KINDS = frozenset({"fqdn"})

LOOKUP_KINDS = frozenset({"node_id", "name", "fqdn", "ipaddress", "image", "kube_object"})


def _interval_contains(valid_from: int, valid_to: Optional[int], at: int) -> bool:
    return valid_from <= at and (valid_to is None or at < valid_to)


@dataclass(frozen=True)
class TopoNode:
    node_id: str
    node_type: str
    display_name: str
    properties: dict = field(default_factory=dict)
    valid_from: int = 0
    valid_to: Optional[int] = None

    def valid_at(self, at: int) -> bool:
        return _interval_contains(self.valid_from, self.valid_to, at)


@dataclass(frozen=True)
class TopoEdge:
    edge_id: str
    edge_type: str
    src: str
    dst: str
    valid_from: int = 0
    valid_to: Optional[int] = None

    def valid_at(self, at: int) -> bool:
        return _interval_contains(self.valid_from, self.valid_to, at)


class TopologyGraph:
    """In-memory temporal graph with lookup and adjacency indexes.

    Reads are lock-free against immutable node/edge records; mutation
    (loading, upsert) takes the writer lock and swaps indexes in place.
    """

    def __init__(self, strict: bool = True):
        self.strict = strict
        self._lock = threading.RLock()
        self._nodes: dict[str, TopoNode] = {}
        self._edges: dict[str, TopoEdge] = {}
        self._out: dict[str, list[str]] = {}
        self._in: dict[str, list[str]] = {}
        # kind -> value -> set of node ids
        self._lookup: dict[str, dict[str, set]] = {k: {} for k in LOOKUP_KINDS if k != "node_id"}
        self._auto_edge = 0
        self._auto_node = 0

    # -- construction -------------------------------------------------

    def _index_node(self, node: TopoNode):
        def add(kind: str, value: str):
            if not value:
                return
            if kind in _CASEFOLD_KINDS:
                value = value.casefold()
            self._lookup[kind].setdefault(value, set()).add(node.node_id)

        add("name", node.display_name)
        if node.node_type in ("fqdn", "host", "server"):
            add("fqdn", node.display_name)
        if node.node_type == "ipaddress":
            add("ipaddress", node.display_name)
        for key, kind in (("name", "name"), ("fqdn", "fqdn"), ("ipaddress", "ipaddress"),
                          ("ip", "ipaddress"), ("image", "image"), ("kube_object", "kube_object")):
            val = node.properties.get(key)
            if isinstance(val, str):
                add(kind, val)
        image = node.properties.get("image")
        if isinstance(image, str) and ":" in image.rsplit("/", 1)[-1]:
            # index the untagged repo as well, so repo-only refs resolve
            add("image", image.rsplit(":", 1)[0])

    def add_node(self, node_type: str, display_name: str, properties: Optional[dict] = None,
                 valid_from: int = 0, valid_to: Optional[int] = None,
                 node_id: Optional[str] = None) -> str:
        with self._lock:
            if node_type not in NODE_TYPES:
                if self.strict:
                    raise UnknownType(f"unknown node type {node_type!r}")
                logger.warning("accepting node type outside taxonomy: %s", node_type)
            if node_id is None:
                self._auto_node += 1
                node_id = f"n{self._auto_node:06d}"
            node = TopoNode(node_id, node_type, display_name, dict(properties or {}),
                            valid_from, valid_to)
            self._nodes[node_id] = node
            self._out.setdefault(node_id, [])
            self._in.setdefault(node_id, [])
            self._index_node(node)
            return node_id

    def add_edge(self, edge_type: str, src: str, dst: str,
                 valid_from: int = 0, valid_to: Optional[int] = None,
                 edge_id: Optional[str] = None) -> str:
        with self._lock:
            if edge_type not in EDGE_TYPES:
                if self.strict:
                    raise UnknownType(f"unknown edge type {edge_type!r}")
                logger.warning("accepting edge type outside taxonomy: %s", edge_type)
            if src not in self._nodes or dst not in self._nodes:
                missing = src if src not in self._nodes else dst
                raise DanglingEdge(f"edge {edge_type} references absent node {missing!r}")
            if edge_type in EDGE_TYPES_BY_CATEGORY["dependency"] and src == dst:
                raise DanglingEdge(f"dependency edge {edge_type} may not be a self-loop on {src!r}")
            if edge_id is None:
                self._auto_edge += 1
                edge_id = f"e{self._auto_edge:06d}"
            edge = TopoEdge(edge_id, edge_type, src, dst, valid_from, valid_to)
            self._edges[edge_id] = edge
            self._out[src].append(edge_id)
            self._in[dst].append(edge_id)
            return edge_id

    # -- queries ------------------------------------------------------

    @property
    def node_count(self) -> int:
        return len(self._nodes)

    @property
    def edge_count(self) -> int:
        return len(self._edges)

    def node(self, node_id: str) -> TopoNode:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def has_node(self, node_id: str) -> bool:
        return node_id in self._nodes

    def nodes(self) -> Iterable[TopoNode]:
        return self._nodes.values()

    def lookup_at(self, kind: str, value: str, at: int) -> list:
        """Node ids matching (kind, value) whose validity contains ``at``."""
        if kind not in LOOKUP_KINDS:
            raise ValueError(f"unknown lookup kind {kind!r}")
        if kind == "node_id":
            node = self._nodes.get(value)
            return [value] if node is not None and node.valid_at(at) else []
        if kind in _CASEFOLD_KINDS:
            value = value.casefold()
        candidates = self._lookup[kind].get(value, ())
        hits = [nid for nid in candidates if self._nodes[nid].valid_at(at)]
        if not hits and kind == "image" and ":" in value.rsplit("/", 1)[-1]:
            # tagged image with no exact hit: fall back to the repo name
            return self.lookup_at("image", value.rsplit(":", 1)[0], at)
        return sorted(hits)

    def neighbors(self, node_id: str, edge_types: Iterable[str],
                  direction: str = "both", at: int = 0) -> list:
        """(edge_type, neighbor_id) pairs valid at ``at``, ordered by edge id."""
        if node_id not in self._nodes:
            raise UnknownNode(node_id)
        wanted = set(edge_types)
        result = []
        if direction in ("out", "both"):
            for eid in self._out.get(node_id, ()):
                e = self._edges[eid]
                if e.edge_type in wanted and e.valid_at(at):
                    result.append((eid, e.edge_type, e.dst))
        if direction in ("in", "both"):
            for eid in self._in.get(node_id, ()):
                e = self._edges[eid]
                if e.edge_type in wanted and e.valid_at(at):
                    result.append((eid, e.edge_type, e.src))
        result.sort(key=lambda t: t[0])
        return [(etype, nid) for _, etype, nid in result]

    # -- snapshot io --------------------------------------------------

    @classmethod
    def load_snapshot(cls, doc: Mapping[str, Any], strict: bool = True) -> "TopologyGraph":
        """Build a graph from a snapshot document {nodes: [...], edges: [...]}.

        Entries without lifetimes get [snapshot_time, open).
        """
        graph = cls(strict=strict)
        snap_time = int(doc.get("snapshot_time", 0))
        for n in doc.get("nodes", []):
            graph.add_node(
                node_type=n["type"],
                display_name=n.get("name", ""),
                properties=n.get("properties") or {},
                valid_from=int(n["valid_from"]) if n.get("valid_from") is not None else snap_time,
                valid_to=int(n["valid_to"]) if n.get("valid_to") is not None else None,
                node_id=n.get("id"),
            )
        for e in doc.get("edges", []):
            graph.add_edge(
                edge_type=e["type"],
                src=e["src"],
                dst=e["dst"],
                valid_from=int(e["valid_from"]) if e.get("valid_from") is not None else snap_time,
                valid_to=int(e["valid_to"]) if e.get("valid_to") is not None else None,
                edge_id=e.get("id"),
            )
        return graph

    @classmethod
    def load_snapshot_file(cls, path: str, strict: bool = True) -> "TopologyGraph":
        with open(path) as fp:
            return cls.load_snapshot(json.load(fp), strict=strict)

    def export_snapshot(self) -> dict:
        nodes = [
            {
                "id": n.node_id,
                "type": n.node_type,
                "name": n.display_name,
                "properties": n.properties,
                "valid_from": n.valid_from,
                "valid_to": n.valid_to,
            }
            for n in sorted(self._nodes.values(), key=lambda n: n.node_id)
        ]
        edges = [
            {
                "id": e.edge_id,
                "type": e.edge_type,
                "src": e.src,
                "dst": e.dst,
                "valid_from": e.valid_from,
                "valid_to": e.valid_to,
            }
            for e in sorted(self._edges.values(), key=lambda e: e.edge_id)
        ]
        return {"nodes": nodes, "edges": edges}
