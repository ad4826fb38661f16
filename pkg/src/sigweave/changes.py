"""Change-record handling: map changes to topology via image names and
attach recently deployed changes to alerts.

Image references are searched in three strict stages: direct image-name
mentions, then tag mentions matched against the catalog (tags are
assumed unique across images), then text similarity against prior
changes whose references are inherited.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

from .embed import Vectorizer, cosine
from .model import ChangeRecord
from .resolve import EnrichedEvent
from .topology import TopologyGraph

DEFAULT_RECENCY_MS = 24 * 3600 * 1000
DEFAULT_SIMILARITY_THRESHOLD = 0.8


@dataclass
class ImageCatalog:
    """Known images, their tags, and the topology nodes running them."""

    images: List[str] = field(default_factory=list)  # registry/repo names
    tags: Dict[str, List[str]] = field(default_factory=dict)  # image -> tags
    nodes: Dict[str, List[str]] = field(default_factory=dict)  # image -> node ids

    def tag_owner(self, tag: str) -> Optional[str]:
        """The unique image carrying this tag, or None when ambiguous/unknown."""
        owners = [img for img, tags in self.tags.items() if tag in tags]
        return owners[0] if len(owners) == 1 else None

    def nodes_for(self, image_ref: str) -> List[str]:
        image = image_ref.rsplit(":", 1)[0] if ":" in image_ref.rsplit("/", 1)[-1] else image_ref
        return sorted(self.nodes.get(image, []))

    @classmethod
    def from_dict(cls, d: dict) -> "ImageCatalog":
        return cls(
            images=list(d.get("images") or []),
            tags={k: list(v) for k, v in (d.get("tags") or {}).items()},
            nodes={k: list(v) for k, v in (d.get("nodes") or {}).items()},
        )

    @classmethod
    def load(cls, path: str) -> "ImageCatalog":
        with open(path) as fp:
            return cls.from_dict(json.load(fp))


def _change_text(change: ChangeRecord) -> str:
    parts = [change.title, change.description, change.purpose, change.close_notes]
    parts.extend(str(ci) for ci in change.configuration_items)
    return " ".join(p for p in parts if p)


_TAG_RE = re.compile(r"\bv?\d+[\w.\-]*\b")


def extract_image_refs(change: ChangeRecord, catalog: ImageCatalog,
                       prior_changes: Iterable[Tuple[ChangeRecord, List[str]]] = (),
                       vectorizer: Optional[Vectorizer] = None,
                       similarity_threshold: float = DEFAULT_SIMILARITY_THRESHOLD) -> List[str]:
    """Image refs for one change via the three-stage search.

    Stage 2 runs only when stage 1 found nothing; stage 3 only when both
    earlier stages were empty.
    """
    text = _change_text(change)

    # stage 1: direct image-name mentions
    refs: List[str] = []
    for image in sorted(catalog.images):
        for m in re.finditer(re.escape(image) + r"(:[\w.\-]+)?", text):
            refs.append(m.group(0))
    if refs:
        return sorted(set(refs))

    # stage 2: tag mentions resolved to their unique image
    for token in sorted(set(_TAG_RE.findall(text))):
        owner = catalog.tag_owner(token)
        if owner is not None:
            refs.append(f"{owner}:{token}")
    if refs:
        return sorted(set(refs))

    # stage 3: inherit refs from textually similar prior changes
    prior = [(c, r) for c, r in prior_changes if r]
    if not prior or vectorizer is None:
        return []
    own_vec = vectorizer.embed(text)
    best_refs: List[str] = []
    best_sim = similarity_threshold
    for prior_change, prior_refs in prior:
        sim = cosine(own_vec, vectorizer.embed(_change_text(prior_change)))
        if sim >= best_sim:
            best_sim = sim
            best_refs = list(prior_refs)
    return sorted(set(best_refs))


def map_changes_to_nodes(changes: Iterable[ChangeRecord], catalog: ImageCatalog,
                         vectorizer: Optional[Vectorizer] = None,
                         similarity_threshold: float = DEFAULT_SIMILARITY_THRESHOLD
                         ) -> Dict[str, List[str]]:
    """change id -> topology node ids, via image extraction + catalog."""
    processed: List[Tuple[ChangeRecord, List[str]]] = []
    mapping: Dict[str, List[str]] = {}
    for change in changes:
        refs = extract_image_refs(change, catalog, processed, vectorizer,
                                  similarity_threshold)
        processed.append((change, refs))
        nodes: set = set()
        for ref in refs:
            nodes.update(catalog.nodes_for(ref))
        mapping[change.id] = sorted(nodes)
    return mapping


def link_changes(alerts: List[EnrichedEvent], changes: List[ChangeRecord],
                 catalog: ImageCatalog, topo: TopologyGraph,
                 recency_ms: int = DEFAULT_RECENCY_MS,
                 vectorizer: Optional[Vectorizer] = None) -> List[EnrichedEvent]:
    """Attach change ids to alerts sharing a topology node (or one
    runsOn hop) where the change ended within the recency window before
    the alert.  Changes after the alert are never linked."""
    change_nodes = map_changes_to_nodes(changes, catalog, vectorizer)
    by_id = {c.id: c for c in changes}
    for ee in alerts:
        at = ee.event.created_at
        near: set = set(ee.entities)
        for ent in list(ee.entities):
            if topo.has_node(ent):
                for _, nbr in topo.neighbors(ent, ("runsOn",), "both", at):
                    near.add(nbr)
        linked = []
        for cid in sorted(change_nodes):
            change = by_id[cid]
            if change.ended_at is None:
                continue
            if not (at - recency_ms <= change.ended_at <= at):
                continue
            if near & set(change_nodes[cid]):
                linked.append(cid)
        ee.change_ids = linked
    return alerts
