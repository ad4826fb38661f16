"""Hybrid entity resolution.

Two extraction paths feed the resolver: declarative template rules
(path + regex + kind) that read known locations in the event, and a
dictionary scanner that finds strings looking like entity references
(DNS names under known suffixes, docker images, Kubernetes object
names).  Extracted references are then resolved against the topology
at the event's creation timestamp.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import InvalidPath
from .model import NormalizedEvent
from .topology import LOOKUP_KINDS, TopologyGraph

logger = logging.getLogger(__name__)

_DNS_LABEL = r"[A-Za-z0-9](?:[A-Za-z0-9-]{0,61}[A-Za-z0-9])?"
_IMAGE_TAG = r"(?::[A-Za-z0-9][A-Za-z0-9._-]{0,127})?"
_KUBE_SUFFIX = r"(?:-[a-z0-9]+)*"


def _compile_pattern(pattern: str) -> re.Pattern:
    # accept .NET-style (?<name>...) group syntax in rule files
    pattern = re.sub(r"\(\?<(?![=!])", "(?P<", pattern)
    return re.compile(pattern)


@dataclass
class MatcherRule:
    rule_id: str
    source_path: str  # dotted path into the event; one wildcard level allowed
    pattern: str
    ref_kind: str
    _compiled: re.Pattern = field(init=False, repr=False)

    def __post_init__(self):
        if self.ref_kind not in LOOKUP_KINDS:
            raise ValueError(f"rule {self.rule_id}: invalid ref kind {self.ref_kind!r}")
        self._compiled = _compile_pattern(self.pattern)
        if not self._compiled.groupindex:
            raise ValueError(f"rule {self.rule_id}: pattern has no named capture group")
        if self.source_path.count("*") > 1:
            raise ValueError(f"rule {self.rule_id}: at most one wildcard level allowed")

    @classmethod
    def from_dict(cls, d: dict) -> "MatcherRule":
        return cls(rule_id=d["id"], source_path=d["path"], pattern=d["pattern"], ref_kind=d["kind"])


def load_rules(path: str) -> list:
    with open(path) as fp:
        return [MatcherRule.from_dict(d) for d in json.load(fp)]


@dataclass
class EntityRef:
    kind: str
    value: str
    provenance: list  # e.g. ["template:rule-7"], ["dictionary:dns"]
    source_field: str = ""
    span: tuple = (0, 0)
    note: str = ""

    def key(self) -> tuple:
        return (self.kind, self.value)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "value": self.value,
            "provenance": list(self.provenance),
            "source_field": self.source_field,
            "span": list(self.span),
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EntityRef":
        return cls(
            kind=d["kind"],
            value=d["value"],
            provenance=list(d.get("provenance") or []),
            source_field=d.get("source_field", ""),
            span=tuple(d.get("span") or (0, 0)),
            note=d.get("note", ""),
        )


class EntityDictionary:
    """Known partial entity names compiled into one scanner per category.

    Updates produce a recompiled matcher and bump the generation counter;
    consumers always see a fully compiled dictionary.
    """

    def __init__(self, dns_suffixes: Iterable[str] = (), image_stems: Iterable[str] = (),
                 kube_stems: Iterable[str] = (), generation: int = 1):
        self.dns_suffixes = sorted(set(dns_suffixes))
        self.image_stems = sorted(set(image_stems))
        self.kube_stems = sorted(set(kube_stems))
        self.generation = generation
        self._compiled = self._compile()

    def _compile(self) -> list:
        compiled = []
        if self.dns_suffixes:
            alts = "|".join(re.escape(s.lstrip(".")) for s in self.dns_suffixes)
            compiled.append(("fqdn", "dns", re.compile(
                rf"\b(?:{_DNS_LABEL}\.)+(?:{alts})\b")))
        if self.image_stems:
            alts = "|".join(re.escape(s) for s in self.image_stems)
            compiled.append(("image", "image", re.compile(
                rf"(?<![\w/])(?:{alts}){_IMAGE_TAG}(?![\w/:])")))
        if self.kube_stems:
            alts = "|".join(re.escape(s) for s in self.kube_stems)
            compiled.append(("kube_object", "kube", re.compile(
                rf"\b(?:{alts}){_KUBE_SUFFIX}\b")))
        return compiled

    def updated(self, dns_suffixes: Iterable[str] = (), image_stems: Iterable[str] = (),
                kube_stems: Iterable[str] = ()) -> "EntityDictionary":
        """New dictionary with added stems and a strictly higher generation."""
        return EntityDictionary(
            dns_suffixes=list(self.dns_suffixes) + list(dns_suffixes),
            image_stems=list(self.image_stems) + list(image_stems),
            kube_stems=list(self.kube_stems) + list(kube_stems),
            generation=self.generation + 1,
        )

    @classmethod
    def from_dict(cls, d: dict) -> "EntityDictionary":
        return cls(
            dns_suffixes=d.get("dns_suffixes") or (),
            image_stems=d.get("image_stems") or (),
            kube_stems=d.get("kube_stems") or (),
        )

    @classmethod
    def load(cls, path: str) -> "EntityDictionary":
        with open(path) as fp:
            return cls.from_dict(json.load(fp))

    def scan(self, field_name: str, text: str) -> list:
        """Longest-match-first, non-overlapping dictionary hits in one field."""
        raw = []
        for kind, category, pattern in self._compiled:
            for m in pattern.finditer(text):
                raw.append((m.start(), m.end(), kind, category, m.group(0)))
        # longest first, then leftmost, then kind for determinism
        raw.sort(key=lambda t: (-(t[1] - t[0]), t[0], t[2]))
        taken: list = []
        occupied: list = []
        for start, end, kind, category, value in raw:
            if any(start < e and s < end for s, e in occupied):
                continue
            occupied.append((start, end))
            taken.append(EntityRef(
                kind=kind, value=value, provenance=[f"dictionary:{category}"],
                source_field=field_name, span=(start, end)))
        taken.sort(key=lambda r: r.span)
        return taken


def _event_fields(event: NormalizedEvent) -> list:
    """(field_label, text) pairs for the scannable parts of an event."""
    fields = [("title", event.title), ("description", event.description)]
    for key, value in event.features.items():
        if isinstance(value, str):
            fields.append((f"features.{key}", value))
        elif isinstance(value, dict):
            for k2, v2 in value.items():
                if isinstance(v2, str):
                    fields.append((f"features.{key}.{k2}", v2))
    return fields


def _paths_matching(event: NormalizedEvent, path: str) -> list:
    """Resolve a rule path (with optional one-level wildcard) to fields."""
    all_fields = dict(_event_fields(event))
    if "*" not in path:
        if path in all_fields:
            return [(path, all_fields[path])]
        return []
    prefix, _, suffix = path.partition("*")
    out = []
    for label, text in all_fields.items():
        if label.startswith(prefix) and label.endswith(suffix) and len(label) >= len(prefix) + len(suffix):
            out.append((label, text))
    return out


def extract_with_templates(event: NormalizedEvent, rules: Iterable[MatcherRule]) -> list:
    """Apply every rule; one ref per (rule, match), deduplicated by (kind, value)."""
    refs: dict = {}
    for rule in rules:
        try:
            fields = _paths_matching(event, rule.source_path)
        except Exception as exc:  # defensive: malformed path expressions
            logger.warning("rule %s skipped: %s", rule.rule_id, exc)
            continue
        root = rule.source_path.split(".")[0]
        if not fields and root not in ("title", "description", "features"):
            logger.warning("rule %s: path %r references nonexistent structure",
                           rule.rule_id, rule.source_path)
            continue
        for label, text in fields:
            for m in rule._compiled.finditer(text):
                for gname in rule._compiled.groupindex:
                    value = m.group(gname)
                    if not value:
                        continue
                    ref = EntityRef(
                        kind=rule.ref_kind, value=value,
                        provenance=[f"template:{rule.rule_id}"],
                        source_field=label, span=m.span(gname))
                    existing = refs.get(ref.key())
                    if existing is None:
                        refs[ref.key()] = ref
                    elif ref.provenance[0] not in existing.provenance:
                        existing.provenance.append(ref.provenance[0])
    return list(refs.values())


def extract_with_dictionary(event: NormalizedEvent, dictionary: EntityDictionary) -> list:
    refs: dict = {}
    for label, text in _event_fields(event):
        for ref in dictionary.scan(label, text):
            existing = refs.get(ref.key())
            if existing is None:
                refs[ref.key()] = ref
            elif ref.provenance[0] not in existing.provenance:
                existing.provenance.append(ref.provenance[0])
    return list(refs.values())


def resolve_refs(refs: Iterable[EntityRef], topo: TopologyGraph, at: int):
    """Resolve refs against the topology at ``at``.

    Ambiguous lookups prefer exact display-name equality; otherwise the
    ref stays unresolved with an ambiguity note.  Entities deleted
    before ``at`` do not resolve.
    """
    resolved: list = []
    unresolved: list = []
    for ref in refs:
        hits = topo.lookup_at(ref.kind, ref.value, at)
        if len(hits) == 1:
            resolved.append((hits[0], ref))
        elif not hits:
            unresolved.append(ref)
        else:
            exact = [nid for nid in hits
                     if topo.node(nid).display_name == ref.value
                     or topo.node(nid).display_name.casefold() == ref.value.casefold()]
            if len(exact) == 1:
                resolved.append((exact[0], ref))
            else:
                ref.note = f"ambiguous: {len(hits)} candidates"
                unresolved.append(ref)
    return resolved, unresolved


@dataclass
class EnrichedEvent:
    event: NormalizedEvent
    entities: dict  # node_id -> list of EntityRef
    unresolved: list
    log_signature: Optional[dict] = None  # application_id -> sorted template ids
    change_ids: list = field(default_factory=list)

    @property
    def entity_ids(self) -> list:
        return sorted(self.entities)

    def to_dict(self) -> dict:
        return {
            "event": self.event.to_dict(),
            "entities": [
                {"node_id": nid, "refs": [r.to_dict() for r in self.entities[nid]]}
                for nid in sorted(self.entities)
            ],
            "unresolved": [r.to_dict() for r in self.unresolved],
            "log_signature": self.log_signature,
            "change_ids": list(self.change_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnrichedEvent":
        return cls(
            event=NormalizedEvent.from_dict(d["event"]),
            entities={
                e["node_id"]: [EntityRef.from_dict(r) for r in e["refs"]]
                for e in d.get("entities") or []
            },
            unresolved=[EntityRef.from_dict(r) for r in d.get("unresolved") or []],
            log_signature=d.get("log_signature"),
            change_ids=list(d.get("change_ids") or []),
        )


def enrich_event(event: NormalizedEvent, rules: Iterable[MatcherRule],
                 dictionary: EntityDictionary, topo: TopologyGraph) -> EnrichedEvent:
    """Union of template-path and dictionary-path resolution, deduplicated
    by node id with provenance preserved from both paths."""
    template_refs = extract_with_templates(event, rules)
    dict_refs = extract_with_dictionary(event, dictionary)

    entities: dict = {}
    unresolved: dict = {}
    for refs in (template_refs, dict_refs):
        res, unres = resolve_refs(refs, topo, event.created_at)
        for node_id, ref in res:
            bucket = entities.setdefault(node_id, [])
            merged = next((r for r in bucket if r.key() == ref.key()), None)
            if merged is None:
                bucket.append(ref)
            else:
                for p in ref.provenance:
                    if p not in merged.provenance:
                        merged.provenance.append(p)
        for ref in unres:
            if ref.key() not in unresolved:
                unresolved[ref.key()] = ref

    # refs that did resolve through the other path are not "unresolved"
    resolved_keys = {r.key() for bucket in entities.values() for r in bucket}
    remaining = [r for k, r in unresolved.items() if k not in resolved_keys]
    return EnrichedEvent(event=event, entities=entities, unresolved=remaining)


def write_enriched_jsonl(enriched: Iterable[EnrichedEvent], fp) -> int:
    n = 0
    for ee in enriched:
        fp.write(json.dumps(ee.to_dict(), sort_keys=True) + "\n")
        n += 1
    return n


def read_enriched_jsonl(fp):
    for line in fp:
        line = line.strip()
        if line:
            yield EnrichedEvent.from_dict(json.loads(line))
