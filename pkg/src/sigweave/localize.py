"""Root-cause entity identification and blast radius.

Alerts in a correlated group are treated as error signals on their
resolved entities.  A signaled entity is a root when nothing it runs on
or depends on (transitively) is also signaled; cyclically dependent
signaled entities are returned together as co-roots.  The blast radius
is the inverse closure: everything running on or depending on a root.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

from .errors import NoResolvedEntities
from .topology import TopologyGraph

PROPAGATING_EDGES = ("runsOn", "dependsOn")


def _reachable(topo: TopologyGraph, start: str, edge_types: Iterable[str],
               direction: str, at: int) -> Set[str]:
    """Transitive closure from ``start`` (excluded) along edges valid at ``at``."""
    seen: Set[str] = set()
    frontier = [start]
    while frontier:
        node = frontier.pop()
        for _, nbr in topo.neighbors(node, edge_types, direction, at):
            if nbr != start and nbr not in seen:
                seen.add(nbr)
                frontier.append(nbr)
    return seen


@dataclass
class SignalOverlay:
    """Map entity id -> alert ids signaling it, at an evaluation time."""

    signals: Dict[str, List[str]]
    at: int

    @classmethod
    def from_group(cls, group_dict: dict, alerts_entities: Dict[str, list],
                   at: int) -> "SignalOverlay":
        signals: Dict[str, List[str]] = {}
        for aid in group_dict["alert_ids"]:
            for ent in alerts_entities.get(aid, ()):
                signals.setdefault(ent, []).append(aid)
        return cls(signals=signals, at=at)


@dataclass
class LocalizationResult:
    roots: List[str]
    blast_radius: List[str]
    explanations: Dict[str, str]

    def to_dict(self, group_id: str) -> dict:
        return {
            "group_id": group_id,
            "roots": self.roots,
            "blast_radius": self.blast_radius,
            "explanations": self.explanations,
        }


def find_roots(signaled: Iterable[str], topo: TopologyGraph, at: int,
               edge_types: Iterable[str] = PROPAGATING_EDGES) -> List[str]:
    """Signaled entities with no signaled entity downstream of them.

    Downstream means reachable via outgoing runsOn/dependsOn edges,
    possibly through unsignaled intermediates.  Cycles among signaled
    entities yield the whole strongly-connected set as co-roots.
    """
    signaled = sorted({e for e in signaled if topo.has_node(e)})
    if not signaled:
        raise NoResolvedEntities("group has no resolved entities")
    edge_types = tuple(edge_types)

    reach = {e: _reachable(topo, e, edge_types, "out", at) for e in signaled}
    # relation on signaled entities: u -> v when v is downstream of u
    succ = {u: {v for v in signaled if v != u and v in reach[u]} for u in signaled}

    # roots = signaled entities in sink components of that relation
    roots: Set[str] = set()
    for u in signaled:
        if not succ[u]:
            roots.add(u)
    if roots:
        return sorted(roots)
    # every signaled entity has a signaled successor: cyclic dependency.
    # Sink strongly-connected components are co-roots.
    for u in signaled:
        component = {u} | {v for v in succ[u] if u in succ[v]}
        if all(v in component for v in succ[u]):
            roots.update(component)
    return sorted(roots) if roots else list(signaled)


def blast_radius(roots: Iterable[str], topo: TopologyGraph, at: int,
                 edge_types: Iterable[str] = PROPAGATING_EDGES) -> Set[str]:
    """Roots plus everything that (transitively) runs on or depends on them."""
    roots = list(roots)
    if not roots:
        raise ValueError("roots must be non-empty")
    radius: Set[str] = set(roots)
    for root in roots:
        radius |= _reachable(topo, root, edge_types, "in", at)
    return radius


def localize_group(group_dict: dict, alerts_entities: Dict[str, list],
                   topo: TopologyGraph,
                   edge_types: Iterable[str] = PROPAGATING_EDGES) -> LocalizationResult:
    """Localize one correlated group; evaluation time is the latest
    member alert creation time (the group interval end)."""
    at = group_dict["interval"][1]
    overlay = SignalOverlay.from_group(group_dict, alerts_entities, at)
    signaled = [e for e in overlay.signals if topo.has_node(e)]
    roots = find_roots(signaled, topo, at, edge_types)
    radius = blast_radius(roots, topo, at, edge_types)

    root_set = set(roots)
    explanations: Dict[str, str] = {}
    for ent in sorted(radius):
        if ent in root_set:
            cyclic = bool(_reachable(topo, ent, edge_types, "out", at) & (root_set - {ent}))
            explanations[ent] = (
                "co-root: cyclic dependency among signaled entities" if cyclic else
                "root: signaled with no signaled downstream dependency")
        elif ent in overlay.signals:
            explanations[ent] = "signaled, depends on a root"
        else:
            explanations[ent] = "in blast radius: runs on / depends on a root"
    return LocalizationResult(
        roots=sorted(roots),
        blast_radius=sorted(radius),
        explanations=explanations,
    )
