"""Synthetic scenarios with planted ground truth, evaluation metrics,
and the comparative benchmark runner.

Scenarios plant fault incidents on a generated topology.  Each incident
emits a burst of alerts: a core on the root container, a spatial
neighbor (the application running on it), and two satellite alerts two
dependency hops away — one recoverable only through a frequent-itemset
pattern, one only through a shared log signature.  Noise alerts are
entity-less singletons.  Metrics use the per-alert convention: an alert
counts as correct when its predicted group's majority truth group is
its own, and a predicted singleton that should have been grouped is a
false positive.
"""

from __future__ import annotations

import csv
import io
import random
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from .correlate import CorrelationConfig, correlate, finalize_groups
from .embed import ClusterModel, Vectorizer
from .errors import InvalidKnobs, UniverseMismatch
from .feedback import FeedbackRecord, apply_feedback
from .logsig import LogLine, LogStore, TemplateModel, build_signature
from .mine import MiningConfig, frequent_itemsets, generate_rules, mine_patterns, windowize
from .model import ChangeRecord, NormalizedEvent, Severity
from .resolve import EnrichedEvent, EntityRef
from .topology import TopologyGraph

EPOCH = 1_609_459_200_000  # 2021-01-01T00:00:00Z


# -- metrics -----------------------------------------------------------


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")


@dataclass(frozen=True)
class MetricReport:
    precision: float
    recall: float
    f1: float
    counts: ConfusionCounts

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.counts.tp,
            "fp": self.counts.fp,
            "fn": self.counts.fn,
        }


def metrics_from_confusion(tp: int, fp: int, fn: int) -> MetricReport:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * r * p / (r + p) if r + p else 0.0
    return MetricReport(precision=p, recall=r, f1=f1,
                        counts=ConfusionCounts(tp=tp, fp=fp, fn=fn))


def score_groups(predicted: Sequence[Iterable[str]], truth: Dict[str, str],
                 mode: str = "paper") -> MetricReport:
    """Per-alert scoring of a predicted grouping against a truth partition.

    An alert is a true positive when its predicted group has a strict
    majority truth group equal to its own — except that a predicted
    singleton whose truth group is multi-member should have been grouped
    and counts as a false positive.  ``mode`` "paper" fixes FN = 0 (no
    missing-member feedback is collected); "full" counts, per truth
    group, the members absent from its best-covering predicted group.
    """
    if mode not in ("paper", "full"):
        raise ValueError(f"unknown scoring mode {mode!r}")
    groups = [sorted(set(g)) for g in predicted]
    universe = {a for g in groups for a in g}
    if universe != set(truth):
        raise UniverseMismatch(
            f"predicted universe has {len(universe)} alerts, truth has {len(truth)}")

    truth_sizes: Dict[str, int] = {}
    for tid in truth.values():
        truth_sizes[tid] = truth_sizes.get(tid, 0) + 1

    tp = fp = 0
    for g in groups:
        labels: Dict[str, int] = {}
        for a in g:
            labels[truth[a]] = labels.get(truth[a], 0) + 1
        top = max(labels.values())
        majorities = [t for t, c in labels.items() if c == top]
        majority = majorities[0] if len(majorities) == 1 else None
        for a in g:
            if majority is None or truth[a] != majority:
                fp += 1
            elif len(g) == 1 and truth_sizes[truth[a]] > 1:
                fp += 1  # left alone although its incident has siblings
            else:
                tp += 1

    fn = 0
    if mode == "full":
        members_of: Dict[str, set] = {}
        for a, tid in truth.items():
            members_of.setdefault(tid, set()).add(a)
        for tid, members in sorted(members_of.items()):
            best = max((len(members & set(g)) for g in groups), default=0)
            fn += len(members) - best
    return metrics_from_confusion(tp, fp, fn)


# -- scenario generation ----------------------------------------------


@dataclass
class Knobs:
    """Scenario shape parameters; defaults give roughly 10k alerts on a
    5k-node topology."""

    faults: int = 1450
    noise: int = 1500
    fault_types: int = 8
    alerts_total: Optional[int] = None  # when set, fault sizes are fitted
    over_merge_pairs: int = 0
    over_merge_minority: int = 4
    change_rate: float = 0.1
    servers: int = 250
    hosts: int = 750
    containers: int = 2000
    apps: int = 2000
    window_ms: int = 300_000

    def validate(self):
        if self.faults < 0 or self.noise < 0 or self.fault_types < 1:
            raise InvalidKnobs("faults and noise must be non-negative, fault_types positive")
        if self.containers < self.faults + self.over_merge_pairs:
            raise InvalidKnobs("not enough containers for distinct fault roots")
        if self.apps < self.containers:
            raise InvalidKnobs("need at least one application per container")
        if self.over_merge_minority < 1:
            raise InvalidKnobs("over_merge_minority must be >= 1")
        if not 0 <= self.change_rate <= 1:
            raise InvalidKnobs("change_rate must lie in [0, 1]")

    @classmethod
    def paper_scale(cls) -> "Knobs":
        """Month-scale analog: 382 truth groups (141 incidents plus 241
        singletons), 1,134 alerts, ~500 topology nodes."""
        return cls(faults=141, noise=241, fault_types=8, alerts_total=1134,
                   servers=16, hosts=100, containers=200, apps=200)

    @classmethod
    def from_dict(cls, d: dict) -> "Knobs":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise InvalidKnobs(f"unknown knobs: {sorted(unknown)}")
        return cls(**known)


@dataclass
class Scenario:
    seed: int
    knobs: Knobs
    topology: TopologyGraph
    alerts: List[EnrichedEvent]
    logs: LogStore
    training_events: List[Tuple[str, str, int]]
    changes: List[ChangeRecord]
    truth: Dict[str, str]  # alert id -> truth group id
    truth_roots: Dict[str, str]  # truth group id -> planted root entity
    fault_type_of_group: Dict[str, int] = field(default_factory=dict)


def _fault_vocab(n_types: int) -> List[dict]:
    """Distinct phrase/term vocabulary per fault type, token-disjoint so
    description embeddings separate cleanly."""
    subjects = ["payment", "checkout", "catalog", "search", "auth", "billing",
                "inventory", "shipping", "profile", "session", "quota", "cache"]
    symptoms = ["latency", "saturation", "exhaustion", "degradation", "backlog",
                "starvation", "thrash", "stall", "flood", "leak", "drift", "churn"]
    out = []
    for i in range(n_types):
        subj = subjects[i % len(subjects)]
        symp = symptoms[i % len(symptoms)]
        out.append({
            "phrase": f"{subj} {symp}",
            "fillers": [f"{subj}{j}marker" for j in range(4)],
            "types": [f"{subj}-{symp}-cpu", f"{subj}-{symp}-mem", f"{subj}-{symp}-io"],
            "log_type": f"{subj}-{symp}-logonly",
            "log_lines": [
                f"ERROR {subj} {symp} handler failed with code %d",
                f"ERROR upstream {subj} call timed out after %d ms",
                f"ERROR retry of {subj} request %d refused",
            ],
        })
    return out


def _build_topology(knobs: Knobs) -> Tuple[TopologyGraph, List[str], Dict[str, dict]]:
    """Layered topology: applications run on containers on hosts on
    servers.  Returns the graph, the containers, and per-container
    context (its host and applications)."""
    topo = TopologyGraph(strict=True)
    t0 = EPOCH - 30 * 86_400_000
    servers = [topo.add_node("server", f"srv-{i:04d}", valid_from=t0)
               for i in range(knobs.servers)]
    hosts = []
    for i in range(knobs.hosts):
        h = topo.add_node("host", f"vm-{i:04d}.internal.example.com", valid_from=t0)
        topo.add_edge("runsOn", h, servers[i % knobs.servers], valid_from=t0)
        hosts.append(h)
    containers, ctx = [], {}
    for i in range(knobs.containers):
        c = topo.add_node("container", f"ctr-{i:04d}",
                          properties={"image": f"registry.example.com/app{i % 40}:v{i % 7}.0"},
                          valid_from=t0)
        topo.add_edge("runsOn", c, hosts[i % knobs.hosts], valid_from=t0)
        containers.append(c)
        ctx[c] = {"apps": [], "host": hosts[i % knobs.hosts]}
    for i in range(knobs.apps):
        c = containers[i % knobs.containers]
        a = topo.add_node("application", f"app-unit-{i:04d}", valid_from=t0)
        topo.add_edge("runsOn", a, c, valid_from=t0)
        ctx[c]["apps"].append(a)
    return topo, containers, ctx


def _mk_alert(aid: str, title: str, description: str, ts: int, source: str,
              event_type: str, entities: Sequence[str],
              log_app: Optional[str] = None) -> EnrichedEvent:
    features = {"alert_type": event_type}
    if log_app:
        features["application_id"] = log_app
    event = NormalizedEvent(
        id=aid, title=title, description=description, created_at=ts,
        severity=Severity.CRITICAL, source=source, features=features)
    ents = {
        ent: [EntityRef(kind="node_id", value=ent, provenance=["generator"])]
        for ent in entities
    }
    return EnrichedEvent(event=event, entities=ents, unresolved=[])


def _fault_sizes(knobs: Knobs) -> List[int]:
    base = 6
    if not knobs.faults:
        return []
    if knobs.alerts_total is None:
        return [base] * knobs.faults
    target = knobs.alerts_total - knobs.noise - knobs.over_merge_pairs * (
        6 + knobs.over_merge_minority)
    if target < knobs.faults * 5:
        raise InvalidKnobs("alerts_total too small for the fault count")
    base = target // knobs.faults
    sizes = [base] * knobs.faults
    for i in range(target - base * knobs.faults):
        sizes[i] += 1
    return sizes


def generate_scenario(seed: int, knobs: Optional[Knobs] = None) -> Scenario:
    """Deterministic scenario for a fixed seed."""
    knobs = knobs or Knobs()
    knobs.validate()
    rng = random.Random(seed)
    vocab = _fault_vocab(knobs.fault_types)
    topo, containers, ctx = _build_topology(knobs)

    # per-fault-type satellite chain: sat --dependsOn--> relay, and the
    # relay gets a time-scoped runsOn edge to each instance's root
    # container.  Two hops keep satellites invisible to the spatial
    # layer while localization still walks through to the root.
    t_open = EPOCH - 30 * 86_400_000
    relays, sats = [], []
    for ft in range(knobs.fault_types):
        relay = topo.add_node("application", f"relay-unit-{ft:02d}", valid_from=t_open)
        sat_a = topo.add_node("application", f"satellite-{ft:02d}-a", valid_from=t_open)
        sat_b = topo.add_node("application", f"satellite-{ft:02d}-b", valid_from=t_open)
        topo.add_edge("dependsOn", sat_a, relay, valid_from=t_open)
        topo.add_edge("dependsOn", sat_b, relay, valid_from=t_open)
        relays.append(relay)
        sats.append((sat_a, sat_b))

    alerts: List[EnrichedEvent] = []
    log_lines: List[LogLine] = []
    changes: List[ChangeRecord] = []
    truth: Dict[str, str] = {}
    truth_roots: Dict[str, str] = {}
    fault_type_of_group: Dict[str, int] = {}
    training: List[Tuple[str, str, int]] = []

    counter = [0]

    def new_aid() -> str:
        counter[0] += 1
        return f"al-{counter[0]:05d}"

    # instances of one type never overlap: spaced well past the window
    spacing = 4 * knobs.window_ms
    per_type: Dict[int, int] = {}
    roots = rng.sample(containers, knobs.faults + knobs.over_merge_pairs)
    sizes = _fault_sizes(knobs)

    def fault_start(ftype: int) -> int:
        idx = per_type.get(ftype, 0)
        per_type[ftype] = idx + 1
        return EPOCH + ftype * 730_000 + idx * spacing

    def description(ftype: int) -> str:
        v = vocab[ftype]
        return f"{v['phrase']} detected on tier {rng.choice(v['fillers'])}"

    for fi in range(knobs.faults):
        ftype = fi % knobs.fault_types
        v = vocab[ftype]
        root = roots[fi]
        gid = f"truth-{fi:05d}"
        t0 = fault_start(ftype)
        app0 = ctx[root]["apps"][0]
        sat_a, sat_b = sats[ftype]
        topo.add_edge("runsOn", relays[ftype], root,
                      valid_from=t0, valid_to=t0 + spacing)

        log_app = f"logs-{root}"
        for j, pattern in enumerate(v["log_lines"]):
            for rep in range(2):
                log_lines.append(LogLine(
                    ts=t0 + j * 5_000 + rep * 1_000,
                    application_id=log_app,
                    message=pattern % rng.randint(100, 999)))

        size = sizes[fi]
        plan = [(v["types"][0], root, 0),
                (v["types"][1], root, 20_000),
                (v["types"][0], app0, 40_000)]
        for i in range(size - 5):
            target = (root, app0)[i % 2]
            plan.append((v["types"][(i + 1) % 2], target, 60_000 + i * 10_000))
        plan.append((v["types"][2], sat_a, 80_000))  # itemset-recoverable
        plan.append((v["log_type"], sat_b, 100_000))  # log-recoverable

        for etype, ent, off in plan:
            aid = new_aid()
            alerts.append(_mk_alert(
                aid, f"{v['phrase']} on {ent}", description(ftype),
                t0 + off, f"monitor-{ftype}", etype, [ent], log_app=log_app))
            truth[aid] = gid
        truth_roots[gid] = root
        fault_type_of_group[gid] = ftype

        if rng.random() < knobs.change_rate:
            image = topo.node(root).properties.get("image", "")
            changes.append(ChangeRecord(
                id=f"chg-{fi:05d}",
                title=f"deploy {image}",
                description=f"rollout of {image} to production",
                started_at=t0 - 7_200_000,
                ended_at=t0 - 3_600_000))

    # over-merged incidents: two unrelated faults land on one container
    # concurrently, with event types outside any mined pattern and no
    # shared logs — only operator feedback can split them.
    om_base = EPOCH + 40 * 86_400_000
    for pi in range(knobs.over_merge_pairs):
        root = roots[knobs.faults + pi]
        ta = (2 * pi) % knobs.fault_types
        tb = (2 * pi + 1) % knobs.fault_types
        t0 = om_base + pi * spacing
        for gid, ftype, count, off0 in (
                (f"truth-om-a-{pi:04d}", ta, 6, 0),
                (f"truth-om-b-{pi:04d}", tb, knobs.over_merge_minority, 10_000)):
            for i in range(count):
                aid = new_aid()
                alerts.append(_mk_alert(
                    aid, f"{vocab[ftype]['phrase']} on {root}", description(ftype),
                    t0 + off0 + i * 15_000, f"monitor-{ftype}",
                    f"rare-{gid}-{i}", [root]))
                truth[aid] = gid
            truth_roots[gid] = root
            fault_type_of_group[gid] = ftype

    # noise: entity-less singletons with low-overlap descriptions
    noise_pool = [f"tok{w:03d}" for w in range(240)]
    for ni in range(knobs.noise):
        aid = new_aid()
        words = rng.sample(noise_pool, 4)
        alerts.append(_mk_alert(
            aid, f"probe {words[0]} anomaly", " ".join(words),
            EPOCH + ni * 97_000, "scanner", f"noise-{ni % 37}", []))
        truth[aid] = f"truth-noise-{ni:05d}"
        truth_roots[truth[aid]] = ""

    # training stream: dedicated sources replay each fault type's core
    # co-occurring event set, so its itemsets are mined at high support
    for src in range(5 * knobs.fault_types):
        ftype = src % knobs.fault_types
        v = vocab[ftype]
        base = EPOCH - 20 * 86_400_000 + src * 50_000
        for w in range(10):
            for ti, etype in enumerate(v["types"]):
                training.append((etype, f"train-src-{src:03d}",
                                 base + w * knobs.window_ms + ti * 1_000))

    alerts.sort(key=lambda ee: (ee.event.created_at, ee.event.id))
    return Scenario(
        seed=seed, knobs=knobs, topology=topo, alerts=alerts,
        logs=LogStore(log_lines), training_events=training, changes=changes,
        truth=truth, truth_roots=truth_roots,
        fault_type_of_group=fault_type_of_group)


def generate_training_stream(seed: int, sources: int = 73,
                             total_transactions: int = 852,
                             window_ms: int = 300_000,
                             fault_types: int = 8,
                             max_per_source: int = 52) -> List[Tuple[str, str, int]]:
    """Event stream whose windowized form has a chosen transaction-count
    profile (default: 73 sources, 852 transactions, busiest source 52)."""
    if sources < 2 or total_transactions < sources:
        raise InvalidKnobs("need at least two sources and one transaction each")
    vocab = _fault_vocab(fault_types)
    counts = [max_per_source]
    remaining = total_transactions - max_per_source
    rest = sources - 1
    base = remaining // rest
    counts += [base + (1 if i < remaining - base * rest else 0) for i in range(rest)]
    events: List[Tuple[str, str, int]] = []
    for si, n in enumerate(counts):
        v = vocab[si % fault_types]
        t0 = EPOCH + si * 11_000
        for w in range(n):
            for ti, etype in enumerate(v["types"][: 2 + (w + si) % 2]):
                events.append((etype, f"src-{si:03d}", t0 + w * window_ms + ti * 1_000))
    return events


# -- benchmark runner --------------------------------------------------


def description_only_groups(alerts: List[EnrichedEvent], vectorizer: Vectorizer,
                            threshold: float) -> List[List[str]]:
    """Baseline: single-linkage components over description-embedding
    cosine similarity at the threshold."""
    from .embed import tokenize

    # embeddings depend only on the token sequence, so dedupe on it
    texts = [" ".join(tokenize(f"{ee.event.title} {ee.event.description}"))
             for ee in alerts]
    uniq = sorted(set(texts))
    pos = {t: i for i, t in enumerate(uniq)}
    X = vectorizer.embed_many(uniq).astype(np.float32)
    sims = X @ X.T
    n = len(uniq)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for off in np.where(sims[i, i + 1:] >= threshold)[0]:
            ri, rj = find(i), find(i + 1 + int(off))
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)

    buckets: Dict[int, List[str]] = {}
    for ee, text in zip(alerts, texts):
        buckets.setdefault(find(pos[text]), []).append(ee.event.id)
    return [sorted(v) for _, v in sorted(buckets.items())]


def build_signatures(scenario: Scenario, window_ms: int = 600_000) -> TemplateModel:
    """Run the log-template pipeline over the scenario, filling each
    alert's log signature in place.  Alerts without an application hint
    keep no signature (absent evidence must not merge groups)."""
    model = TemplateModel()
    for ee in scenario.alerts:
        app = ee.event.features.get("application_id")
        if not app:
            ee.log_signature = None
            continue
        sig = build_signature(ee.event, scenario.logs, model, window_ms, [app])
        ee.log_signature = sig or None
    return model


def down_votes_for_wrong_groups(group_dicts: List[dict],
                                truth: Dict[str, str]) -> List[FeedbackRecord]:
    """Truth-consistent thumbs-down on every multi-member group with
    mixed truth membership."""
    votes = []
    for g in group_dicts:
        labels = {truth[a] for a in g["alert_ids"]}
        if len(g["alert_ids"]) > 1 and len(labels) > 1:
            votes.append(FeedbackRecord(group_id=g["group_id"], verdict="down",
                                        author="bench", ts=EPOCH))
    return votes


def _pick(scores: Dict[float, dict], preferred: float) -> dict:
    return scores[preferred] if preferred in scores else scores[sorted(scores)[0]]


def run_benchmark(scenario: Scenario,
                  thresholds: Sequence[float] = (0.6, 0.65, 0.7),
                  min_sup_sweep: Sequence[float] = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9),
                  feedback_k: Optional[int] = None) -> dict:
    """Run the layer variants, threshold sweeps, a feedback replay, and
    the mining-runtime sweep; returns the full report."""
    knobs = scenario.knobs
    timings: Dict[str, float] = {}
    report: dict = {"seed": scenario.seed, "alerts": len(scenario.alerts),
                    "nodes": scenario.topology.node_count,
                    "variants": {}, "sweeps": {}}

    class timed:
        def __init__(self, name: str):
            self.name = name

        def __enter__(self):
            self.t = time.perf_counter()

        def __exit__(self, *exc):
            timings[self.name] = time.perf_counter() - self.t

    corpus = [f"{ee.event.title} {ee.event.description}" for ee in scenario.alerts]
    with timed("vectorizer"):
        vectorizer = Vectorizer.fit(corpus)

    def score(groups: List[List[str]]) -> MetricReport:
        return score_groups(groups, scenario.truth, mode="paper")

    desc_scores: Dict[float, dict] = {}
    with timed("description_only"):
        for th in thresholds:
            desc_scores[th] = score(
                description_only_groups(scenario.alerts, vectorizer, th)).to_dict()
    report["sweeps"]["description_only"] = desc_scores
    report["variants"]["description_only"] = _pick(desc_scores, 0.65)

    with timed("patterns"):
        patterns = mine_patterns(scenario.training_events,
                                 MiningConfig(window_ms=knobs.window_ms))
    with timed("signatures"):
        build_signatures(scenario)

    def pipeline(layers: Tuple[str, ...], threshold: float = 0.65):
        config = CorrelationConfig(temporal_window_ms=knobs.window_ms,
                                   log_template_threshold=threshold,
                                   layers=layers)
        return correlate(scenario.alerts, scenario.topology, config,
                         patterns=patterns)

    with timed("temporal_spatial"):
        g_ts = pipeline(("temporal", "spatial"))
    report["variants"]["temporal_spatial"] = score([g.members for g in g_ts]).to_dict()

    with timed("apriori"):
        g_ap = pipeline(("temporal", "spatial", "apriori"))
    report["variants"]["apriori"] = score([g.members for g in g_ap]).to_dict()

    log_scores: Dict[float, dict] = {}
    g_final = None
    with timed("log_template"):
        for th in thresholds:
            g_lt = pipeline(("temporal", "spatial", "apriori", "log_template"), th)
            log_scores[th] = score([g.members for g in g_lt]).to_dict()
            if th == 0.65 or g_final is None:
                g_final = g_lt
    report["sweeps"]["log_template"] = log_scores
    report["variants"]["log_template"] = _pick(log_scores, 0.65)

    # feedback replay on the final grouping
    with timed("feedback"):
        final_dicts = finalize_groups(g_final)
        votes = down_votes_for_wrong_groups(final_dicts, scenario.truth)
        from .embed import tokenize
        deduped = sorted({" ".join(tokenize(t)) for t in corpus})
        model = ClusterModel.train(deduped, k=feedback_k or knobs.fault_types)
        by_key = {g.key: g for g in g_final}
        id_pairs = [(d["group_id"], by_key[d["alert_ids"][0]]) for d in final_dicts]
        refined, ops = apply_feedback(id_pairs, votes, model,
                                      window_ms=knobs.window_ms)
        report["variants"]["feedback"] = score([g.members for g in refined]).to_dict()
        report["feedback_ops"] = len(ops)

    # mining runtime vs minimum support, on the training stream
    ts = windowize(scenario.training_events, knobs.window_ms)
    sweep_rows = []
    for ms in min_sup_sweep:
        t0 = time.perf_counter()
        freq = frequent_itemsets(ts, ms)
        rules = generate_rules(freq, 0.5)
        sweep_rows.append({
            "min_sup": ms,
            "itemsets": len(freq),
            "rules": len(rules),
            "runtime_s": round(time.perf_counter() - t0, 6),
        })
    report["sweeps"]["min_sup"] = sweep_rows
    report["timings"] = {k: round(v, 3) for k, v in timings.items()}
    return report


def min_sup_sweep_csv(rows: List[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["min_sup", "itemsets", "rules", "runtime_s"])
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()
