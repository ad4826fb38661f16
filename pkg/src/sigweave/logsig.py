"""Log-template pipeline.

Raw log lines are classified error/non-error with a transparent rule
scorer, error lines are templatized online with a fixed-depth parse
tree, and each event gets a log signature: the set of (application id,
template ids) mined from error lines around the event's start.  The
signature overlap score is the similarity signal the correlation
stage's log-template layer consumes.
"""

from __future__ import annotations

import bisect
import json
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Set

from .model import NormalizedEvent

WILDCARD = "<*>"

_SEVERITY_TOKENS = re.compile(
    r"\b(error|err|fatal|critical|crit|severe|panic|emerg(?:ency)?|alert)\b", re.IGNORECASE)
_FAILURE_KEYWORDS = re.compile(
    r"\b(fail(?:ed|ure|ing)?|exception|timeout|timed out|refused|denied|unreachable|"
    r"unavailable|aborted|crash(?:ed)?|killed|oom|out of memory|cannot|can't|unable to|"
    r"rejected|dropped|corrupt(?:ed)?|5\d\d)\b", re.IGNORECASE)
_STACK_TRACE = re.compile(r"^\s+at\s+\S+|Traceback \(most recent call last\)|^\s+File \"")


@dataclass(frozen=True)
class LogLine:
    ts: int  # epoch ms
    application_id: str
    message: str

    def __post_init__(self):
        if not self.message.strip():
            raise ValueError("log message empty after trimming")


def classify_line(line: LogLine) -> str:
    """Rule-based error/non-error label for one log line."""
    msg = line.message
    if _SEVERITY_TOKENS.search(msg) or _FAILURE_KEYWORDS.search(msg) or _STACK_TRACE.search(msg):
        return "error"
    return "non_error"


_MASKS = [
    re.compile(r"\b[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}\b"),  # uuid
    re.compile(r"\b(?:\d{1,3}\.){3}\d{1,3}(?::\d+)?\b"),  # ipv4 (+port)
    re.compile(r"\b0[xX][0-9a-fA-F]+\b"),
    re.compile(r"\b[0-9a-fA-F]{12,}\b"),  # long hex ids
    re.compile(r"(?<![\w/])/[\w.\-]+(?:/[\w.\-]+)+"),  # filesystem paths
    re.compile(r"\b\d+(?:\.\d+)?\b"),  # numbers
]


def mask_variables(message: str) -> str:
    for pattern in _MASKS:
        message = pattern.sub(WILDCARD, message)
    return message


def _tokenize(message: str) -> list:
    return mask_variables(message).split()


class _Cluster:
    __slots__ = ("template_id", "tokens", "count")

    def __init__(self, template_id: int, tokens: list):
        self.template_id = template_id
        self.tokens = tokens
        self.count = 0


class TemplateModel:
    """Fixed-depth parse tree over token sequences (Drain-style).

    Lines route by token count, then by their first ``depth - 2``
    tokens; the leaf holds clusters compared by token similarity.
    Template ids are stable: once assigned they are never renumbered.
    """

    def __init__(self, depth: int = 4, similarity_threshold: float = 0.5, max_children: int = 100):
        self.depth = depth
        self.similarity_threshold = similarity_threshold
        self.max_children = max_children
        self._root: dict = {}
        self._clusters: Dict[int, _Cluster] = {}
        self._next_id = 1

    @property
    def templates(self) -> dict:
        return {cid: list(c.tokens) for cid, c in self._clusters.items()}

    def template_string(self, template_id: int) -> str:
        return " ".join(self._clusters[template_id].tokens)

    def _leaf_for(self, tokens: list, create: bool):
        node = self._root
        key_path = [str(len(tokens))] + [
            tokens[i] if not any(ch.isdigit() for ch in tokens[i]) else WILDCARD
            for i in range(min(self.depth - 2, len(tokens)))
        ]
        for key in key_path:
            children = node.setdefault("children", {})
            if key not in children:
                if not create:
                    return None
                if len(children) >= self.max_children and key != WILDCARD:
                    key = WILDCARD
                    if key not in children:
                        children[key] = {}
                else:
                    children[key] = {}
            node = children[key]
        return node.setdefault("clusters", []) if create else node.get("clusters")

    @staticmethod
    def _similarity(a: list, b: list) -> float:
        if len(a) != len(b):
            return 0.0
        if not a:
            return 1.0
        same = sum(1 for x, y in zip(a, b) if x == y or x == WILDCARD or y == WILDCARD)
        return same / len(a)

    def mine(self, line: LogLine) -> int:
        """Assign the line a template id, creating a template if needed."""
        tokens = _tokenize(line.message)
        leaf = self._leaf_for(tokens, create=True)
        best, best_sim = None, -1.0
        for cid in leaf:
            sim = self._similarity(tokens, self._clusters[cid].tokens)
            if sim > best_sim:
                best, best_sim = cid, sim
        if best is not None and best_sim >= self.similarity_threshold:
            cluster = self._clusters[best]
            # merge: positions that differ become wildcards
            cluster.tokens = [
                x if x == y else WILDCARD for x, y in zip(cluster.tokens, tokens)
            ]
            cluster.count += 1
            return cluster.template_id
        cid = self._next_id
        self._next_id += 1
        cluster = _Cluster(cid, list(tokens))
        cluster.count = 1
        self._clusters[cid] = cluster
        leaf.append(cid)
        return cid

    # -- persistence --------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "similarity_threshold": self.similarity_threshold,
            "max_children": self.max_children,
            "next_id": self._next_id,
            "tree": self._root,
            "templates": [
                {"id": c.template_id, "tokens": c.tokens, "count": c.count}
                for c in sorted(self._clusters.values(), key=lambda c: c.template_id)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TemplateModel":
        model = cls(depth=d["depth"], similarity_threshold=d["similarity_threshold"],
                    max_children=d["max_children"])
        model._root = d["tree"]
        model._next_id = d["next_id"]
        for t in d["templates"]:
            c = _Cluster(t["id"], list(t["tokens"]))
            c.count = t["count"]
            model._clusters[t["id"]] = c
        return model


class LogStore:
    """Log lines indexed by application id and time for window queries."""

    def __init__(self, lines: Iterable[LogLine] = ()):
        self._by_app: Dict[str, list] = {}
        for line in lines:
            self.add(line)

    def add(self, line: LogLine):
        bucket = self._by_app.setdefault(line.application_id, [])
        bisect.insort(bucket, (line.ts, line.message))

    def window(self, start: int, end: int) -> Iterable[LogLine]:
        """Lines with start <= ts <= end, across all applications."""
        for app in sorted(self._by_app):
            bucket = self._by_app[app]
            lo = bisect.bisect_left(bucket, (start, ""))
            for ts, message in bucket[lo:]:
                if ts > end:
                    break
                yield LogLine(ts, app, message)

    @classmethod
    def load_jsonl(cls, fp) -> "LogStore":
        store = cls()
        for raw in fp:
            raw = raw.strip()
            if raw:
                d = json.loads(raw)
                store.add(LogLine(int(d["ts"]), d["application_id"], d["message"]))
        return store


# A log signature is a mapping application_id -> set of template ids.
Signature = Dict[str, Set[int]]


def build_signature(event: NormalizedEvent, logs: LogStore, model: TemplateModel,
                    window_ms: int,
                    application_ids: Optional[Iterable[str]] = None) -> Signature:
    """Signature from error lines within +/- window of the event start.

    ``application_ids`` restricts the scan to the event's applications;
    without it every application in the store contributes.
    """
    apps = set(application_ids) if application_ids is not None else None
    signature: Signature = {}
    for line in logs.window(event.created_at - window_ms, event.created_at + window_ms):
        if apps is not None and line.application_id not in apps:
            continue
        if classify_line(line) != "error":
            continue
        tid = model.mine(line)
        signature.setdefault(line.application_id, set()).add(tid)
    return signature


def signature_similarity(a: Signature, b: Signature) -> float:
    """Per-application template Jaccard, averaged over the union of apps.

    Empty-vs-anything scores 0 so absent evidence never merges groups.
    """
    apps_a, apps_b = set(a), set(b)
    union = apps_a | apps_b
    if not union:
        return 0.0
    total = 0.0
    for app in apps_a & apps_b:
        ta, tb = set(a[app]), set(b[app])
        denom = len(ta | tb)
        if denom:
            total += len(ta & tb) / denom
    return total / len(union)


def merge_signatures(signatures: Iterable[Signature]) -> Signature:
    out: Signature = {}
    for sig in signatures:
        for app, tids in sig.items():
            out.setdefault(app, set()).update(tids)
    return out


def signature_to_json(sig: Optional[Signature]) -> Optional[dict]:
    if sig is None:
        return None
    return {app: sorted(tids) for app, tids in sorted(sig.items())}


def signature_from_json(d: Optional[dict]) -> Optional[Signature]:
    if d is None:
        return None
    return {app: set(tids) for app, tids in d.items()}
