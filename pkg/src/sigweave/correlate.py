"""Hybrid alert correlation.

Five layers run in a fixed order, each refining the previous partition
of the alert set: temporal (same entity, chained in time), spatial
(one dependency hop), operator rules (force/forbid), apriori patterns
(frequent itemset guided split/merge), and log-template similarity
(greedy agglomerative merge on signature overlap).  Every merge or
split records which layer made it.
"""

from __future__ import annotations

import heapq
import json
import logging
import re
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

from .logsig import Signature, merge_signatures, signature_similarity, signature_to_json
from .mine import FrequentItemset, PatternStore, match_patterns
from .model import NormalizedEvent
from .resolve import EnrichedEvent
from .topology import TopologyGraph

logger = logging.getLogger(__name__)

_NUM = re.compile(r"\d+")


def event_type_of(event: NormalizedEvent) -> str:
    """Event type used for mining and rules: the explicit alert_type
    feature when present, else the number-masked lowercased title."""
    at = event.features.get("alert_type")
    if isinstance(at, str) and at:
        return at
    return _NUM.sub("<n>", event.title.lower()).strip()


@dataclass
class CorrelationConfig:
    temporal_window_ms: int = 300_000
    spatial_edge_types: tuple = ("dependsOn", "runsOn")
    log_template_threshold: float = 0.65
    layers: tuple = ("temporal", "spatial", "sre_rules", "apriori", "log_template")

    def __post_init__(self):
        if not 0 < self.log_template_threshold < 1:
            raise ValueError("log-template threshold must lie in (0, 1)")
        if self.temporal_window_ms <= 0:
            raise ValueError("temporal window must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "CorrelationConfig":
        return cls(
            temporal_window_ms=int(d.get("temporal_window_ms", 300_000)),
            spatial_edge_types=tuple(d.get("spatial_edge_types") or ("dependsOn", "runsOn")),
            log_template_threshold=float(d.get("log_template_threshold", 0.65)),
            layers=tuple(d.get("layers") or ("temporal", "spatial", "sre_rules", "apriori", "log_template")),
        )


@dataclass
class SreRule:
    rule_id: str
    action: str  # force_group | forbid_group
    predicate: dict  # matchers over severity/source/entity/event_type/features
    note: str = ""

    def __post_init__(self):
        if self.action not in ("force_group", "forbid_group"):
            raise ValueError(f"rule {self.rule_id}: unknown action {self.action!r}")

    def matches(self, ee: EnrichedEvent) -> bool:
        p = self.predicate
        ev = ee.event
        if "alert_ids" in p and ev.id not in p["alert_ids"]:
            return False
        if "severity" in p and ev.severity.value != p["severity"]:
            return False
        if "source" in p and ev.source != p["source"]:
            return False
        if "event_type" in p and event_type_of(ev) != p["event_type"]:
            return False
        if "entity" in p and p["entity"] not in ee.entities:
            return False
        for key, want in (p.get("features") or {}).items():
            if ev.features.get(key) != want:
                return False
        return True

    @classmethod
    def from_dict(cls, d: dict) -> "SreRule":
        return cls(rule_id=d["id"], action=d["action"],
                   predicate=dict(d.get("predicate") or {}), note=d.get("note", ""))

    def to_dict(self) -> dict:
        return {"id": self.rule_id, "action": self.action,
                "predicate": self.predicate, "note": self.note}


class AlertGroup:
    """A correlated set of alerts with merge provenance."""

    def __init__(self, members: Iterable[str], alerts: Dict[str, EnrichedEvent],
                 provenance: Optional[list] = None):
        self.members: List[str] = sorted(set(members))
        if not self.members:
            raise ValueError("group must have at least one member")
        self._alerts = alerts
        self.provenance: list = list(provenance or [])
        self.pinned = False  # set by feedback up-votes

    @property
    def key(self) -> str:
        """Canonical in-pipeline id: the smallest member alert id."""
        return self.members[0]

    @property
    def interval(self) -> Tuple[int, int]:
        times = [self._alerts[a].event.created_at for a in self.members]
        return min(times), max(times)

    @property
    def entity_ids(self) -> Set[str]:
        out: Set[str] = set()
        for a in self.members:
            out.update(self._alerts[a].entities)
        return out

    @property
    def event_types(self) -> FrozenSet[str]:
        return frozenset(event_type_of(self._alerts[a].event) for a in self.members)

    def signature(self) -> Signature:
        sigs = [self._alerts[a].log_signature for a in self.members
                if self._alerts[a].log_signature]
        return merge_signatures(s for s in sigs if s)

    def note(self, layer: str, detail: str):
        self.provenance.append({"layer": layer, "detail": detail})

    def to_dict(self, group_id: str) -> dict:
        lo, hi = self.interval
        return {
            "group_id": group_id,
            "alert_ids": self.members,
            "provenance": self.provenance,
            "entities": sorted(self.entity_ids),
            "interval": [lo, hi],
            "signature": signature_to_json(self.signature()) or {},
        }


def _overlaps(a: Tuple[int, int], b: Tuple[int, int], slack: int) -> bool:
    return a[0] - slack <= b[1] and b[0] - slack <= a[1]


def _violates(members_a: Iterable[str], members_b: Iterable[str],
              forbidden: Set[FrozenSet[str]]) -> bool:
    if not forbidden:
        return False
    for x in members_a:
        for y in members_b:
            if frozenset((x, y)) in forbidden:
                return True
    return False


def _merge(a: AlertGroup, b: AlertGroup, layer: str, detail: str) -> AlertGroup:
    merged = AlertGroup(a.members + b.members, a._alerts,
                        provenance=a.provenance + b.provenance)
    merged.note(layer, detail)
    return merged


def group_temporal(alerts: List[EnrichedEvent], window_ms: int) -> List[AlertGroup]:
    """Chain alerts on the same entity whose creation gaps stay within
    the window; entity-less alerts become singletons."""
    index = {ee.event.id: ee for ee in alerts}
    parent: Dict[str, str] = {aid: aid for aid in index}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(x: str, y: str):
        rx, ry = find(x), find(y)
        if rx != ry:
            if ry < rx:
                rx, ry = ry, rx
            parent[ry] = rx

    by_entity: Dict[str, list] = {}
    for ee in alerts:
        for ent in ee.entities:
            by_entity.setdefault(ent, []).append((ee.event.created_at, ee.event.id))
    for ent in sorted(by_entity):
        chain = sorted(by_entity[ent])
        for (t1, a1), (t2, a2) in zip(chain, chain[1:]):
            if t2 - t1 <= window_ms:
                union(a1, a2)

    buckets: Dict[str, list] = {}
    for aid in index:
        buckets.setdefault(find(aid), []).append(aid)
    groups = []
    for root in sorted(buckets):
        g = AlertGroup(buckets[root], index)
        if len(g.members) > 1:
            g.note("temporal", f"chained {len(g.members)} alerts within {window_ms}ms")
        groups.append(g)
    return groups


def group_spatial(groups: List[AlertGroup], topo: TopologyGraph,
                  config: CorrelationConfig,
                  forbidden: Optional[Set[FrozenSet[str]]] = None) -> List[AlertGroup]:
    """Merge concurrent groups whose entities sit one dependency hop apart."""
    forbidden = forbidden or set()
    slack = config.temporal_window_ms
    edge_types = set(config.spatial_edge_types)

    # reach set per group: own entities plus their one-hop neighbors
    entity_index: Dict[str, list] = {}
    for gi, g in enumerate(groups):
        for ent in g.entity_ids:
            entity_index.setdefault(ent, []).append(gi)

    parent = list(range(len(groups)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    merged_via: Dict[Tuple[int, int], str] = {}
    for gi, g in enumerate(groups):
        lo, hi = g.interval
        at = hi
        reach: Dict[str, str] = {}
        for ent in g.entity_ids:
            if not topo.has_node(ent):
                continue
            for etype, nbr in topo.neighbors(ent, edge_types, "both", at):
                reach[nbr] = f"{etype}({ent},{nbr})"
        for nbr, via in sorted(reach.items()):
            for gj in entity_index.get(nbr, ()):
                if gj == gi:
                    continue
                if not _overlaps(groups[gi].interval, groups[gj].interval, slack):
                    continue
                if _violates(groups[gi].members, groups[gj].members, forbidden):
                    continue
                ri, rj = find(gi), find(gj)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
                    merged_via[(min(gi, gj), max(gi, gj))] = via

    buckets: Dict[int, list] = {}
    for gi in range(len(groups)):
        buckets.setdefault(find(gi), []).append(gi)
    out = []
    for root in sorted(buckets):
        idxs = buckets[root]
        if len(idxs) == 1:
            out.append(groups[idxs[0]])
            continue
        members: list = []
        provenance: list = []
        for gi in idxs:
            members.extend(groups[gi].members)
            provenance.extend(groups[gi].provenance)
        merged = AlertGroup(members, groups[idxs[0]]._alerts, provenance)
        vias = [v for (i, j), v in sorted(merged_via.items()) if i in idxs and j in idxs]
        merged.note("spatial", "; ".join(vias[:4]) or "one-hop dependency")
        out.append(merged)
    return out


def apply_sre_rules(groups: List[AlertGroup], rules: List[SreRule],
                    forbidden: Optional[Set[FrozenSet[str]]] = None
                    ) -> Tuple[List[AlertGroup], Set[FrozenSet[str]], list]:
    """Apply operator rules.  Returns (groups, forbidden pair set,
    conflicts).  Forbid always beats force."""
    forbidden = set(forbidden or set())
    conflicts: list = []
    alerts = groups[0]._alerts if groups else {}

    # collect forbid pairs first so force merges can respect them
    for rule in rules:
        if rule.action != "forbid_group":
            continue
        matched = sorted(aid for aid, ee in alerts.items() if rule.matches(ee))
        for i, x in enumerate(matched):
            for y in matched[i + 1:]:
                forbidden.add(frozenset((x, y)))

    # forbid: separate matched co-members
    out: List[AlertGroup] = []
    for g in groups:
        parts: List[list] = []
        for aid in g.members:
            placed = False
            for part in parts:
                if not _violates([aid], part, forbidden):
                    part.append(aid)
                    placed = True
                    break
            if not placed:
                parts.append([aid])
        if len(parts) == 1:
            out.append(g)
        else:
            for part in parts:
                sub = AlertGroup(part, g._alerts, provenance=list(g.provenance))
                sub.note("sre_rule", "forbid_group separation")
                out.append(sub)

    # force: union groups containing alerts matched by the same force rule
    for rule in rules:
        if rule.action != "force_group":
            continue
        matched = {aid for aid, ee in alerts.items() if rule.matches(ee)}
        if len(matched) < 2:
            continue
        touched = [g for g in out if matched & set(g.members)]
        if len(touched) < 2:
            continue
        acc = touched[0]
        for g in touched[1:]:
            if _violates(acc.members, g.members, forbidden):
                conflicts.append({
                    "rule": rule.rule_id,
                    "reason": "force conflicts with forbidden pair; forbid wins",
                })
                continue
            out.remove(g)
            out.remove(acc)
            acc = _merge(acc, g, "sre_rule", f"force_group {rule.rule_id}")
            out.append(acc)
    out.sort(key=lambda g: g.key)
    return out, forbidden, conflicts


def adjust_with_itemsets(groups: List[AlertGroup], patterns: PatternStore,
                         window_ms: int = 300_000,
                         forbidden: Optional[Set[FrozenSet[str]]] = None) -> List[AlertGroup]:
    """Frequent-itemset guided refinement.

    Split: members whose types form a contained frequent itemset are
    pulled out when no frequent itemset links their types to any
    co-member type.  Merge: a group whose types complete a frequent
    itemset with a concurrent group is merged into it.
    """
    forbidden = forbidden or set()
    frequents = patterns.active_itemsets()
    if not frequents:
        return list(groups)
    multi = [f for f in frequents if f.length >= 2]

    def cooccur(t1: str, t2: str) -> bool:
        return any(t1 in f.items and t2 in f.items for f in multi)

    out: List[AlertGroup] = []
    for g in groups:
        types = g.event_types
        matched = match_patterns(types, frequents)
        contained = [f for f, tag in matched if tag == "contained" and f.length >= 2]
        split_done = False
        for f in contained:
            inside = [a for a in g.members if event_type_of(g._alerts[a].event) in f.items]
            outside = [a for a in g.members if a not in inside]
            if not outside or not inside:
                continue
            outside_types = {event_type_of(g._alerts[a].event) for a in outside}
            if any(cooccur(u, v) for u in outside_types for v in f.items):
                continue
            core = AlertGroup(inside, g._alerts, provenance=list(g.provenance))
            core.note("apriori", f"split: itemset {sorted(f.items)} isolated")
            rest = AlertGroup(outside, g._alerts, provenance=list(g.provenance))
            rest.note("apriori", "split remainder")
            out.extend([core, rest])
            split_done = True
            break
        if not split_done:
            out.append(g)

    # merge phase: small groups are absorbed by concurrent groups whose
    # types complete a frequent itemset with theirs
    pool: Dict[str, AlertGroup] = {g.key: g for g in out}
    type_index: Dict[str, Set[str]] = {}
    for key, g in pool.items():
        for t in g.event_types:
            type_index.setdefault(t, set()).add(key)

    queue = sorted(k for k, g in pool.items() if len(g.members) <= 3)
    while queue:
        key = queue.pop(0)
        g = pool.get(key)
        if g is None or len(g.members) > 3:
            continue
        tg = g.event_types
        hit = None
        candidate_items = [f for f in multi if f.items & tg and not f.items <= tg]
        for f in sorted(candidate_items, key=lambda f: sorted(f.items)):
            need = f.items - tg
            partner_keys: Optional[Set[str]] = None
            for t in need:
                owners = type_index.get(t, set())
                partner_keys = owners if partner_keys is None else partner_keys & owners
            if not partner_keys:
                continue
            for pk in sorted(partner_keys - {key}):
                h = pool.get(pk)
                if h is None or not _overlaps(g.interval, h.interval, window_ms):
                    continue
                if _violates(g.members, h.members, forbidden):
                    continue
                hit = (h, f)
                break
            if hit:
                break
        if hit is None:
            continue
        h, f = hit
        merged = _merge(h, g, "apriori", f"merge: completes itemset {sorted(f.items)}")
        for stale in (key, h.key):
            stale_g = pool.pop(stale, None)
            if stale_g is not None:
                for t in stale_g.event_types:
                    type_index.get(t, set()).discard(stale)
        pool[merged.key] = merged
        for t in merged.event_types:
            type_index.setdefault(t, set()).add(merged.key)
        if len(merged.members) <= 3:
            queue.append(merged.key)
    return [pool[k] for k in sorted(pool)]


def merge_by_log_template(groups: List[AlertGroup], threshold: float,
                          forbidden: Optional[Set[FrozenSet[str]]] = None) -> List[AlertGroup]:
    """Greedy agglomerative merging on group log-signature similarity.

    Repeatedly merges the highest-scoring pair at or above the
    threshold; deterministic by (score desc, smaller group key).
    """
    forbidden = forbidden or set()
    pool: Dict[str, AlertGroup] = {g.key: g for g in groups}
    sig_cache: Dict[str, Signature] = {k: g.signature() for k, g in pool.items()}

    def candidate_pairs(keys: Iterable[str]) -> Iterable[Tuple[str, str]]:
        app_index: Dict[str, list] = {}
        for k in keys:
            for app in sig_cache[k]:
                app_index.setdefault(app, []).append(k)
        seen: set = set()
        for bucket in app_index.values():
            bucket.sort()
            for i, a in enumerate(bucket):
                for b in bucket[i + 1:]:
                    if (a, b) not in seen:
                        seen.add((a, b))
                        yield a, b

    heap: list = []
    for a, b in candidate_pairs(sorted(pool)):
        score = signature_similarity(sig_cache[a], sig_cache[b])
        if score >= threshold:
            heapq.heappush(heap, (-score, a, b))

    while heap and len(pool) > 1:
        neg, a, b = heapq.heappop(heap)
        if a not in pool or b not in pool:
            continue
        if _violates(pool[a].members, pool[b].members, forbidden):
            continue
        score = -neg
        merged = _merge(pool[a], pool[b], "log_template", f"similarity {score:.3f}")
        del pool[a], pool[b]
        key = merged.key
        pool[key] = merged
        sig_cache[key] = merged.signature()
        for other in sorted(pool):
            if other == key:
                continue
            s = signature_similarity(sig_cache[key], sig_cache[other])
            if s >= threshold:
                x, y = sorted((key, other))
                heapq.heappush(heap, (-s, x, y))
    return [pool[k] for k in sorted(pool)]


def correlate(alerts: List[EnrichedEvent], topo: Optional[TopologyGraph],
              config: CorrelationConfig,
              patterns: Optional[PatternStore] = None,
              rules: Optional[List[SreRule]] = None,
              forbidden: Optional[Set[FrozenSet[str]]] = None) -> List[AlertGroup]:
    """Full pipeline: temporal -> spatial -> sre_rules -> apriori ->
    log_template.  Output is a partition of the input alerts."""
    if not alerts:
        return []
    layers = config.layers
    forbidden = set(forbidden or set())

    groups = group_temporal(alerts, config.temporal_window_ms)
    if "temporal" not in layers:
        # temporal is the base partition; disabling it means singletons
        index = {ee.event.id: ee for ee in alerts}
        groups = [AlertGroup([aid], index) for aid in sorted(index)]

    if "spatial" in layers and topo is not None:
        groups = group_spatial(groups, topo, config, forbidden)
    if "sre_rules" in layers and rules:
        groups, forbidden, conflicts = apply_sre_rules(groups, rules, forbidden)
        for c in conflicts:
            logger.warning("conflicting rules: %s", c)
    if "apriori" in layers and patterns is not None:
        groups = adjust_with_itemsets(groups, patterns, config.temporal_window_ms, forbidden)
    if "log_template" in layers:
        groups = merge_by_log_template(groups, config.log_template_threshold, forbidden)

    _assert_partition(groups, alerts)
    return sorted(groups, key=lambda g: g.key)


def _assert_partition(groups: List[AlertGroup], alerts: List[EnrichedEvent]):
    seen: Set[str] = set()
    for g in groups:
        for a in g.members:
            if a in seen:
                raise AssertionError(f"alert {a} in more than one group")
            seen.add(a)
    expected = {ee.event.id for ee in alerts}
    if seen != expected:
        raise AssertionError("groups do not partition the alert set")


def finalize_groups(groups: List[AlertGroup]) -> List[dict]:
    """Assign stable output ids (ordered by first alert time, then key)."""
    ordered = sorted(groups, key=lambda g: (g.interval[0], g.key))
    return [g.to_dict(f"grp-{i + 1:05d}") for i, g in enumerate(ordered)]


def write_groups_jsonl(group_dicts: List[dict], fp) -> int:
    for d in group_dicts:
        fp.write(json.dumps(d, sort_keys=True) + "\n")
    return len(group_dicts)


def read_groups_jsonl(fp) -> List[dict]:
    return [json.loads(line) for line in fp if line.strip()]
