"""Association rule mining over windowed event transactions.

Sequential events are cut into fixed time windows per source; the
distinct event types seen in one window form one transaction.  Apriori
then generates frequent itemsets level-wise with downward-closure
pruning, and strong rules are extracted above a confidence threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

from .errors import EmptyInput


@dataclass(frozen=True)
class Transaction:
    tid: str
    itemset: FrozenSet[str]
    source_id: str
    window_start: int
    window_end: int


@dataclass
class TransactionSet:
    event_types: List[str]
    transactions: List[Transaction]

    def __len__(self):
        return len(self.transactions)


@dataclass
class MiningConfig:
    window_ms: int = 300_000
    min_sup: float = 0.3
    min_conf: float = 0.5

    def __post_init__(self):
        if self.window_ms <= 0:
            raise ValueError("window must be positive")
        if not 0 < self.min_sup <= 1 or not 0 < self.min_conf <= 1:
            raise ValueError("min_sup and min_conf must lie in (0, 1]")


@dataclass(frozen=True)
class FrequentItemset:
    items: FrozenSet[str]
    support: float

    @property
    def length(self) -> int:
        return len(self.items)

    def to_dict(self) -> dict:
        return {"items": sorted(self.items), "support": self.support}


@dataclass(frozen=True)
class AssociationRule:
    antecedent: FrozenSet[str]
    consequent: FrozenSet[str]
    support: float
    confidence: float

    def to_dict(self) -> dict:
        return {
            "lhs": sorted(self.antecedent),
            "rhs": sorted(self.consequent),
            "support": self.support,
            "confidence": self.confidence,
        }


def windowize(events: Iterable[Tuple[str, str, int]], window_ms: int) -> TransactionSet:
    """Cut each source's timeline into fixed windows anchored at its first
    event; every non-empty window becomes one transaction."""
    by_source: Dict[str, list] = {}
    for event_type, source_id, ts in events:
        by_source.setdefault(source_id, []).append((ts, event_type))
    if not by_source:
        raise EmptyInput("no events to windowize")

    types: set = set()
    transactions: List[Transaction] = []
    for source_id in sorted(by_source):
        entries = sorted(by_source[source_id])
        anchor = entries[0][0]
        buckets: Dict[int, set] = {}
        for ts, event_type in entries:
            buckets.setdefault((ts - anchor) // window_ms, set()).add(event_type)
            types.add(event_type)
        for idx in sorted(buckets):
            start = anchor + idx * window_ms
            transactions.append(Transaction(
                tid=f"{source_id}#{idx}",
                itemset=frozenset(buckets[idx]),
                source_id=source_id,
                window_start=start,
                window_end=start + window_ms,
            ))
    return TransactionSet(event_types=sorted(types), transactions=transactions)


def frequent_itemsets(ts: TransactionSet, min_sup: float) -> List[FrequentItemset]:
    """Level-wise apriori; returns exactly the itemsets with support >= min_sup."""
    if not 0 < min_sup <= 1:
        raise ValueError("min_sup must lie in (0, 1]")
    n = len(ts.transactions)
    if n == 0:
        return []
    itemsets = [t.itemset for t in ts.transactions]

    def support_count(candidate: FrozenSet[str]) -> int:
        return sum(1 for s in itemsets if candidate <= s)

    result: List[FrequentItemset] = []
    current: Dict[FrozenSet[str], int] = {}
    for item in ts.event_types:
        c = frozenset([item])
        cnt = support_count(c)
        if cnt / n >= min_sup:
            current[c] = cnt

    while current:
        for items, cnt in sorted(current.items(), key=lambda kv: sorted(kv[0])):
            result.append(FrequentItemset(items=items, support=cnt / n))
        frequent_now = set(current)
        # candidate generation: join sets sharing all but the last item
        prev = sorted(frequent_now, key=lambda s: sorted(s))
        candidates: set = set()
        for a, b in combinations(prev, 2):
            union = a | b
            if len(union) == len(a) + 1:
                # downward closure: every (k)-subset must be frequent
                if all(frozenset(sub) in frequent_now
                       for sub in combinations(union, len(a))):
                    candidates.add(union)
        current = {}
        for c in candidates:
            cnt = support_count(c)
            if cnt / n >= min_sup:
                current[c] = cnt
    result.sort(key=lambda f: (f.length, sorted(f.items)))
    return result


def generate_rules(frequents: Iterable[FrequentItemset], min_conf: float) -> List[AssociationRule]:
    """All rules X -> Y with X ∪ Y frequent and confidence >= min_conf."""
    support = {f.items: f.support for f in frequents}
    rules: List[AssociationRule] = []
    for items, sup in support.items():
        if len(items) < 2:
            continue
        for r in range(1, len(items)):
            for lhs in combinations(sorted(items), r):
                lhs_set = frozenset(lhs)
                lhs_sup = support.get(lhs_set)
                if not lhs_sup:
                    continue
                conf = sup / lhs_sup
                if conf >= min_conf:
                    rules.append(AssociationRule(
                        antecedent=lhs_set,
                        consequent=items - lhs_set,
                        support=sup,
                        confidence=conf,
                    ))
    rules.sort(key=lambda r: (sorted(r.antecedent), sorted(r.consequent)))
    return rules


def match_patterns(alert_types: FrozenSet[str], frequents: Iterable[FrequentItemset]) -> list:
    """Maximal frequent itemsets contained in or overlapping the type set.

    Returns (itemset, "contained" | "overlapping") pairs, consumed by the
    correlation stage's itemset adjustment.
    """
    alert_types = frozenset(alert_types)
    hits = []
    pool = [f for f in frequents if f.items & alert_types]
    # maximal only: drop itemsets strictly contained in another hit
    for f in pool:
        if any(f.items < g.items for g in pool):
            continue
        tag = "contained" if f.items <= alert_types else "overlapping"
        hits.append((f, tag))
    hits.sort(key=lambda h: (h[1], sorted(h[0].items)))
    return hits


@dataclass
class PatternStore:
    """Trained itemsets and rules, with feedback demotion marks."""

    itemsets: List[FrequentItemset] = field(default_factory=list)
    rules: List[AssociationRule] = field(default_factory=list)
    demoted: set = field(default_factory=set)  # frozensets excluded from adjustment

    def active_itemsets(self) -> List[FrequentItemset]:
        return [f for f in self.itemsets if f.items not in self.demoted]

    def demote(self, items: FrozenSet[str]):
        self.demoted.add(frozenset(items))

    def to_dict(self) -> dict:
        return {
            "itemsets": [f.to_dict() for f in self.itemsets],
            "rules": [r.to_dict() for r in self.rules],
            "demoted": sorted(sorted(s) for s in self.demoted),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PatternStore":
        return cls(
            itemsets=[FrequentItemset(frozenset(x["items"]), x["support"])
                      for x in d.get("itemsets") or []],
            rules=[AssociationRule(frozenset(x["lhs"]), frozenset(x["rhs"]),
                                   x["support"], x["confidence"])
                   for x in d.get("rules") or []],
            demoted={frozenset(s) for s in d.get("demoted") or []},
        )

    def save(self, path: str):
        with open(path, "w") as fp:
            json.dump(self.to_dict(), fp, sort_keys=True, indent=2)

    @classmethod
    def load(cls, path: str) -> "PatternStore":
        with open(path) as fp:
            return cls.from_dict(json.load(fp))


def mine_patterns(events: Iterable[Tuple[str, str, int]], config: MiningConfig,
                  per_source: bool = True) -> PatternStore:
    """Windowize and mine; with ``per_source`` each source is mined on its
    own transactions and the resulting itemsets/rules are pooled (highest
    support/confidence wins on duplicates)."""
    ts = windowize(events, config.window_ms)
    if not per_source:
        frequents = frequent_itemsets(ts, config.min_sup)
        rules = generate_rules(frequents, config.min_conf)
        return PatternStore(itemsets=frequents, rules=rules)

    pooled_items: Dict[FrozenSet[str], float] = {}
    pooled_rules: Dict[Tuple[FrozenSet[str], FrozenSet[str]], AssociationRule] = {}
    sources = sorted({t.source_id for t in ts.transactions})
    for source_id in sources:
        sub = TransactionSet(
            event_types=ts.event_types,
            transactions=[t for t in ts.transactions if t.source_id == source_id],
        )
        frequents = frequent_itemsets(sub, config.min_sup)
        for f in frequents:
            if f.support > pooled_items.get(f.items, 0.0):
                pooled_items[f.items] = f.support
        for r in generate_rules(frequents, config.min_conf):
            key = (r.antecedent, r.consequent)
            if key not in pooled_rules or r.confidence > pooled_rules[key].confidence:
                pooled_rules[key] = r
    itemsets = sorted(
        (FrequentItemset(items, sup) for items, sup in pooled_items.items()),
        key=lambda f: (f.length, sorted(f.items)))
    rules = sorted(pooled_rules.values(),
                   key=lambda r: (sorted(r.antecedent), sorted(r.consequent)))
    return PatternStore(itemsets=itemsets, rules=rules)
