"""Learning from minimal SRE verdicts.

Thumbs-down on a group triggers a content-based split along embedding
cluster membership; afterwards concurrent groups whose member-majority
clusters coincide are merged (absorbing singletons).  Up-voted groups
are pinned.  Accepted refinements feed back into the knowledge stores:
forbid/force rules and demotion marks on contradicted itemsets.
"""

from __future__ import annotations

import json
import os
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

from .correlate import AlertGroup, SreRule, _overlaps, event_type_of
from .embed import ClusterModel
from .errors import UnknownGroup
from .mine import PatternStore
from .resolve import EnrichedEvent


@dataclass
class FeedbackRecord:
    group_id: str
    verdict: str  # up | down
    author: str
    ts: int
    flags: Optional[Dict[str, bool]] = None  # alert id -> belongs

    def __post_init__(self):
        if self.verdict not in ("up", "down"):
            raise ValueError(f"verdict must be up or down, got {self.verdict!r}")

    def to_dict(self) -> dict:
        return {"group_id": self.group_id, "verdict": self.verdict,
                "author": self.author, "ts": self.ts, "flags": self.flags}

    @classmethod
    def from_dict(cls, d: dict) -> "FeedbackRecord":
        return cls(group_id=d["group_id"], verdict=d["verdict"],
                   author=d.get("author", ""), ts=int(d.get("ts", 0)),
                   flags=d.get("flags"))


class FeedbackStore:
    """Append-only JSONL store, last-write-wins per (group, author)."""

    def __init__(self, path: str):
        self.path = path

    def _read_all(self) -> List[FeedbackRecord]:
        if not os.path.exists(self.path):
            return []
        with open(self.path) as fp:
            return [FeedbackRecord.from_dict(json.loads(line))
                    for line in fp if line.strip()]

    def record(self, fb: FeedbackRecord, known_groups: Optional[Iterable[str]] = None) -> str:
        if known_groups is not None and fb.group_id not in set(known_groups):
            raise UnknownGroup(fb.group_id)
        records = self._read_all()
        records = [r for r in records if (r.group_id, r.author) != (fb.group_id, fb.author)]
        records.append(fb)
        # atomic replace so concurrent readers never see a torn file
        directory = os.path.dirname(os.path.abspath(self.path)) or "."
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        with os.fdopen(fd, "w") as fp:
            for r in records:
                fp.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
        os.replace(tmp, self.path)
        return f"{fb.group_id}:{fb.author}"

    def latest(self) -> List[FeedbackRecord]:
        return self._read_all()


@dataclass
class RefinementOp:
    kind: str  # split | merge
    inputs: List[str]  # group ids
    outputs: List[str]
    justification: dict

    def to_dict(self) -> dict:
        return {"kind": self.kind, "inputs": self.inputs,
                "outputs": self.outputs, "justification": self.justification}


def _majority_cluster(group: AlertGroup, clusters: Dict[str, int]) -> int:
    counts = Counter(clusters[a] for a in group.members)
    # deterministic: highest count, then smallest cluster id
    return min(counts, key=lambda c: (-counts[c], c))


def apply_feedback(groups: List[Tuple[str, AlertGroup]],
                   feedbacks: List[FeedbackRecord],
                   cluster_model: ClusterModel,
                   single_groups_policy: str = "absorb",
                   window_ms: int = 300_000
                   ) -> Tuple[List[AlertGroup], List[RefinementOp]]:
    """Split down-voted groups by embedding cluster, then merge concurrent
    cluster-coinciding groups.  ``groups`` pairs each persisted group id
    with its AlertGroup; up-voted groups are pinned untouched."""
    by_id: Dict[str, AlertGroup] = dict(groups)
    ops: List[RefinementOp] = []

    latest: Dict[Tuple[str, str], FeedbackRecord] = {}
    for fb in feedbacks:
        latest[(fb.group_id, fb.author)] = fb
    down: Dict[str, FeedbackRecord] = {}
    pinned: set = set()
    for fb in latest.values():
        if fb.group_id not in by_id:
            continue
        if fb.verdict == "up":
            pinned.add(fb.group_id)
            by_id[fb.group_id].pinned = True
        else:
            down[fb.group_id] = fb

    # cluster assignment per alert (title + description, like training)
    clusters: Dict[str, int] = {}
    for _, g in groups:
        for aid in g.members:
            if aid not in clusters:
                ev = g._alerts[aid].event
                clusters[aid] = cluster_model.assign(f"{ev.title} {ev.description}")

    working: List[AlertGroup] = []
    pinned_groups: List[AlertGroup] = []
    touched: set = set()  # keys of split outputs; merge candidates
    for gid, g in groups:
        if gid in pinned:
            pinned_groups.append(g)
            continue
        fb = down.get(gid)
        if fb is None:
            working.append(g)
            continue
        if fb.flags:
            stay = [a for a in g.members if fb.flags.get(a, True)]
            leave = [a for a in g.members if not fb.flags.get(a, True)]
            parts = [p for p in ([stay] + [[a] for a in leave]) if p]
        else:
            by_cluster: Dict[int, list] = {}
            for aid in g.members:
                by_cluster.setdefault(clusters[aid], []).append(aid)
            parts = [by_cluster[c] for c in sorted(by_cluster)]
        if len(parts) < 2:
            working.append(g)
            continue
        outputs = []
        for part in parts:
            sub = AlertGroup(part, g._alerts, provenance=list(g.provenance))
            sub.note("feedback", f"split of {gid} by embedding cluster")
            working.append(sub)
            outputs.append(sub.key)
            touched.add(sub.key)
        ops.append(RefinementOp(
            kind="split", inputs=[gid], outputs=outputs,
            justification={"feedback": f"{gid}:{fb.author}",
                           "clusters": sorted({clusters[a] for a in g.members})}))

    # merge phase: split outputs re-attach to concurrent groups sharing
    # their majority cluster.  Only split-affected groups participate so
    # feedback-free input passes through untouched.
    merged = True
    while merged:
        merged = False
        working.sort(key=lambda g: g.key)
        for i in range(len(working)):
            gi = working[i]
            ci = _majority_cluster(gi, clusters)
            for j in range(i + 1, len(working)):
                gj = working[j]
                if gi.key not in touched and gj.key not in touched:
                    continue
                if not _overlaps(gi.interval, gj.interval, window_ms):
                    continue
                if single_groups_policy != "absorb" and (len(gi.members) == 1 or len(gj.members) == 1):
                    continue
                if _majority_cluster(gj, clusters) != ci:
                    continue
                union = AlertGroup(gi.members + gj.members, gi._alerts,
                                   provenance=gi.provenance + gj.provenance)
                union.note("feedback", f"merge: shared embedding cluster {ci}")
                ops.append(RefinementOp(
                    kind="merge", inputs=[gi.key, gj.key], outputs=[union.key],
                    justification={"cluster": ci}))
                working = [g for k, g in enumerate(working) if k not in (i, j)]
                working.append(union)
                touched.discard(gi.key)
                touched.discard(gj.key)
                touched.add(union.key)
                merged = True
                break
            if merged:
                break

    result = sorted(working + pinned_groups, key=lambda g: g.key)
    return result, ops


def update_knowledge(ops: List[RefinementOp],
                     groups_before: Dict[str, AlertGroup],
                     groups_after: Dict[str, AlertGroup],
                     rules: List[SreRule],
                     patterns: PatternStore) -> Tuple[List[SreRule], PatternStore]:
    """Persist refinements: forbid rules for split pairs, force hints for
    merges, demotion marks on itemsets contradicted by splits."""
    rules = list(rules)
    next_idx = len(rules) + 1
    for op in ops:
        if op.kind == "split":
            parts = [groups_after[out].members for out in op.outputs if out in groups_after]
            types_by_part = []
            for part in parts:
                some = groups_after.get(op.outputs[0])
                alerts = some._alerts if some else {}
                types_by_part.append({event_type_of(alerts[a].event)
                                      for a in part if a in alerts})
            for pi in range(len(parts)):
                for pj in range(pi + 1, len(parts)):
                    for a in parts[pi]:
                        for b in parts[pj]:
                            rules.append(SreRule(
                                rule_id=f"fb-forbid-{next_idx}",
                                action="forbid_group",
                                predicate={"alert_ids": [a, b]},
                                note=f"from split of {op.inputs[0]}"))
                            next_idx += 1
            # demote itemsets spanning the split parts
            for f in patterns.active_itemsets():
                hit = sum(1 for t in types_by_part if f.items & t)
                if hit >= 2:
                    patterns.demote(f.items)
        elif op.kind == "merge":
            members = groups_after[op.outputs[0]].members if op.outputs[0] in groups_after else []
            if members:
                rules.append(SreRule(
                    rule_id=f"fb-force-{next_idx}",
                    action="force_group",
                    predicate={"alert_ids": list(members)},
                    note=f"from merge of {'+'.join(op.inputs)}"))
                next_idx += 1
    return rules, patterns
