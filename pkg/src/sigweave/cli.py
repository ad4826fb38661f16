"""Command-line interface.

Every stage is a subcommand reading/writing flat JSON or JSONL
artifacts; reruns on identical inputs produce byte-identical outputs.
"""

from __future__ import annotations

import json
import sys

import click

from .changes import ImageCatalog, link_changes
from .correlate import (
    CorrelationConfig,
    SreRule,
    correlate,
    finalize_groups,
    read_groups_jsonl,
    write_groups_jsonl,
)
from .embed import ClusterModel, Vectorizer, select_cluster_count
from .errors import SigweaveError
from .feedback import FeedbackRecord, FeedbackStore, apply_feedback
from .localize import localize_group
from .logsig import LogStore, TemplateModel, build_signature
from .mine import MiningConfig, mine_patterns
from .model import (
    AdapterConfig,
    ChangeRecord,
    normalize_event,
    read_events_jsonl,
    write_events_jsonl,
)
from .resolve import (
    EntityDictionary,
    enrich_event,
    load_rules,
    read_enriched_jsonl,
    write_enriched_jsonl,
)
from .server import ServiceConfig, run_pipeline
from .topology import TopologyGraph


def parse_duration_ms(value: str) -> int:
    """'300' (seconds), '300s', '5m', or '600000ms' → milliseconds."""
    text = str(value).strip().lower()
    if text.endswith("ms"):
        return int(text[:-2])
    if text.endswith("s"):
        return int(float(text[:-1]) * 1000)
    if text.endswith("m"):
        return int(float(text[:-1]) * 60_000)
    return int(float(text) * 1000)


def _fail(exc: Exception):
    raise click.ClickException(str(exc))


@click.group()
def main():
    """Alert enrichment, correlation, localization, and feedback."""


@main.command()
@click.option("--raw", "raw_path", required=True, type=click.Path(exists=True),
              help="Raw source payloads, one JSON document per line.")
@click.option("--adapter", "adapter_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def ingest(raw_path, adapter_path, out_path):
    """Normalize raw payloads into the common event schema."""
    with open(adapter_path) as fp:
        adapter = AdapterConfig.from_dict(json.load(fp))
    events = []
    with open(raw_path) as fp:
        for lineno, line in enumerate(fp, 1):
            line = line.strip()
            if not line:
                continue
            try:
                events.append(normalize_event(json.loads(line), adapter))
            except SigweaveError as exc:
                _fail(f"line {lineno}: {exc}")
    events.sort(key=lambda ev: (ev.created_at, ev.id))
    with open(out_path, "w") as fp:
        n = write_events_jsonl(events, fp)
    click.echo(f"wrote {n} events to {out_path}")


@main.command()
@click.option("--events", "events_path", required=True, type=click.Path(exists=True))
@click.option("--topology", "topology_path", required=True, type=click.Path(exists=True))
@click.option("--rules", "rules_path", type=click.Path(exists=True))
@click.option("--dict", "dict_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def resolve(events_path, topology_path, rules_path, dict_path, out_path):
    """Resolve textual entity references against the topology."""
    topo = TopologyGraph.load_snapshot_file(topology_path)
    rules = load_rules(rules_path) if rules_path else []
    dictionary = EntityDictionary.load(dict_path) if dict_path else EntityDictionary()
    with open(events_path) as fp:
        events = list(read_events_jsonl(fp))
    enriched = [enrich_event(ev, rules, dictionary, topo) for ev in events]
    with open(out_path, "w") as fp:
        n = write_enriched_jsonl(enriched, fp)
    resolved = sum(1 for ee in enriched if ee.entities)
    click.echo(f"wrote {n} enriched events ({resolved} with entities) to {out_path}")


@main.command()
@click.option("--logs", "logs_path", required=True, type=click.Path(exists=True))
@click.option("--events", "events_path", required=True, type=click.Path(exists=True),
              help="Enriched events JSONL; signatures are filled in.")
@click.option("--window", default="600s", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--model-out", "model_path", type=click.Path())
def logsig(logs_path, events_path, window, out_path, model_path):
    """Mine log templates and attach signatures to events."""
    window_ms = parse_duration_ms(window)
    with open(logs_path) as fp:
        logs = LogStore.load_jsonl(fp)
    with open(events_path) as fp:
        enriched = list(read_enriched_jsonl(fp))
    model = TemplateModel()
    attached = 0
    for ee in enriched:
        app = ee.event.features.get("application_id")
        sig = build_signature(ee.event, logs, model, window_ms,
                              [app] if app else None)
        ee.log_signature = {a: sorted(t) for a, t in sorted(sig.items())} if sig else None
        attached += bool(sig)
    with open(out_path, "w") as fp:
        write_enriched_jsonl(enriched, fp)
    if model_path:
        with open(model_path, "w") as fp:
            json.dump(model.to_dict(), fp, sort_keys=True)
    click.echo(f"attached signatures to {attached}/{len(enriched)} events")


@main.command()
@click.option("--events", "events_path", required=True, type=click.Path(exists=True))
@click.option("--window", default="300", show_default=True, help="Window (seconds by default).")
@click.option("--min-sup", default=0.3, show_default=True, type=float)
@click.option("--min-conf", default=0.5, show_default=True, type=float)
@click.option("--out", "out_path", required=True, type=click.Path())
def mine(events_path, window, min_sup, min_conf, out_path):
    """Mine frequent event-type itemsets and association rules."""
    from .correlate import event_type_of

    with open(events_path) as fp:
        events = list(read_events_jsonl(fp))
    stream = [(event_type_of(ev), ev.source, ev.created_at) for ev in events]
    try:
        config = MiningConfig(window_ms=parse_duration_ms(window),
                              min_sup=min_sup, min_conf=min_conf)
        store = mine_patterns(stream, config)
    except (SigweaveError, ValueError) as exc:
        _fail(exc)
    store.save(out_path)
    click.echo(f"mined {len(store.itemsets)} itemsets, {len(store.rules)} rules")


@main.command("embed-cluster")
@click.option("--events", "events_path", required=True, type=click.Path(exists=True))
@click.option("--k-range", default="2:30", show_default=True, help="inclusive lo:hi")
@click.option("--model-out", "model_path", required=True, type=click.Path())
@click.option("--report-out", "report_path", type=click.Path())
def embed_cluster(events_path, k_range, model_path, report_path):
    """Embed event texts, select the cluster count, train the model."""
    with open(events_path) as fp:
        events = list(read_events_jsonl(fp))
    texts = sorted({f"{ev.title} {ev.description}" for ev in events})
    lo, _, hi = k_range.partition(":")
    ks = list(range(int(lo), int(hi or lo) + 1))
    try:
        vectorizer = Vectorizer.fit(texts)
        vectors = vectorizer.embed_many(texts)
        k_star, scores = select_cluster_count(vectors, ks)
        model = ClusterModel.train(texts, k=k_star)
    except SigweaveError as exc:
        _fail(exc)
    model.save(model_path)
    if report_path:
        with open(report_path, "w") as fp:
            json.dump({"k": k_star, "scores": {str(k): s for k, s in sorted(scores.items())}},
                      fp, sort_keys=True, indent=2)
    click.echo(f"selected k={k_star}")


@main.command("correlate")
@click.option("--events", "events_path", required=True, type=click.Path(exists=True),
              help="Enriched events JSONL.")
@click.option("--topology", "topology_path", type=click.Path(exists=True))
@click.option("--patterns", "patterns_path", type=click.Path(exists=True))
@click.option("--sre-rules", "sre_rules_path", type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def correlate_cmd(events_path, topology_path, patterns_path, sre_rules_path,
                  config_path, out_path):
    """Group alerts through the layered correlation pipeline."""
    from .mine import PatternStore

    with open(events_path) as fp:
        enriched = list(read_enriched_jsonl(fp))
    topo = TopologyGraph.load_snapshot_file(topology_path) if topology_path else None
    patterns = PatternStore.load(patterns_path) if patterns_path else None
    rules = []
    if sre_rules_path:
        with open(sre_rules_path) as fp:
            rules = [SreRule.from_dict(d) for d in json.load(fp)]
    config = CorrelationConfig()
    if config_path:
        with open(config_path) as fp:
            config = CorrelationConfig.from_dict(json.load(fp))
    groups = correlate(enriched, topo, config, patterns=patterns, rules=rules)
    group_dicts = finalize_groups(groups)
    with open(out_path, "w") as fp:
        write_groups_jsonl(group_dicts, fp)
    multi = sum(1 for d in group_dicts if len(d["alert_ids"]) > 1)
    click.echo(f"{len(enriched)} alerts -> {len(group_dicts)} groups ({multi} multi-alert)")


@main.command()
@click.option("--groups", "groups_path", required=True, type=click.Path(exists=True))
@click.option("--events", "events_path", required=True, type=click.Path(exists=True),
              help="Enriched events JSONL (entity assignments).")
@click.option("--topology", "topology_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def localize(groups_path, events_path, topology_path, out_path):
    """Identify root-cause entities and blast radii per group."""
    topo = TopologyGraph.load_snapshot_file(topology_path)
    with open(groups_path) as fp:
        group_dicts = read_groups_jsonl(fp)
    with open(events_path) as fp:
        alerts_entities = {ee.event.id: ee.entity_ids for ee in read_enriched_jsonl(fp)}
    results = {}
    for d in group_dicts:
        if not d["entities"]:
            continue
        try:
            results[d["group_id"]] = localize_group(d, alerts_entities, topo).to_dict(d["group_id"])
        except SigweaveError:
            continue
    with open(out_path, "w") as fp:
        json.dump(results, fp, sort_keys=True, indent=2)
    click.echo(f"localized {len(results)}/{len(group_dicts)} groups")


@main.group()
def feedback():
    """Record and apply SRE feedback."""


@feedback.command()
@click.option("--store", "store_path", required=True, type=click.Path())
@click.option("--group", "group_id", required=True)
@click.option("--verdict", required=True, type=click.Choice(["up", "down"]))
@click.option("--author", default="cli")
@click.option("--ts", default=0, type=int)
def record(store_path, group_id, verdict, author, ts):
    """Append one feedback record to the store."""
    store = FeedbackStore(store_path)
    key = store.record(FeedbackRecord(group_id=group_id, verdict=verdict,
                                      author=author, ts=ts))
    click.echo(f"recorded {key}")


@feedback.command()
@click.option("--groups", "groups_path", required=True, type=click.Path(exists=True))
@click.option("--events", "events_path", required=True, type=click.Path(exists=True))
@click.option("--feedback", "feedback_path", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True),
              help="Trained cluster model JSON.")
@click.option("--window", default="300s", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def apply(groups_path, events_path, feedback_path, model_path, window, out_path):
    """Split/merge groups according to recorded feedback."""
    from .correlate import AlertGroup

    with open(events_path) as fp:
        enriched = {ee.event.id: ee for ee in read_enriched_jsonl(fp)}
    with open(groups_path) as fp:
        group_dicts = read_groups_jsonl(fp)
    id_pairs = [(d["group_id"], AlertGroup(d["alert_ids"], enriched))
                for d in group_dicts]
    feedbacks = FeedbackStore(feedback_path).latest()
    model = ClusterModel.load(model_path)
    refined, ops = apply_feedback(id_pairs, feedbacks, model,
                                  window_ms=parse_duration_ms(window))
    with open(out_path, "w") as fp:
        write_groups_jsonl(finalize_groups(refined), fp)
    click.echo(f"{len(group_dicts)} groups -> {len(refined)} after {len(ops)} refinements")


@main.group()
def changes():
    """Change-record linking."""


@changes.command()
@click.option("--changes", "changes_path", required=True, type=click.Path(exists=True))
@click.option("--events", "events_path", required=True, type=click.Path(exists=True),
              help="Enriched events JSONL.")
@click.option("--catalog", "catalog_path", required=True, type=click.Path(exists=True))
@click.option("--topology", "topology_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def link(changes_path, events_path, catalog_path, topology_path, out_path):
    """Attach recently deployed changes to alerts."""
    with open(changes_path) as fp:
        change_records = [ChangeRecord.from_dict(json.loads(line))
                          for line in fp if line.strip()]
    with open(events_path) as fp:
        enriched = list(read_enriched_jsonl(fp))
    topo = TopologyGraph.load_snapshot_file(topology_path)
    link_changes(enriched, change_records, ImageCatalog.load(catalog_path), topo)
    with open(out_path, "w") as fp:
        write_enriched_jsonl(enriched, fp)
    linked = sum(1 for ee in enriched if ee.change_ids)
    click.echo(f"linked changes to {linked}/{len(enriched)} events")


@main.command()
@click.option("--seed", default=7, show_default=True, type=int)
@click.option("--knobs", "knobs_path", type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def bench(seed, knobs_path, out_dir):
    """Generate the synthetic benchmark and run all pipeline variants."""
    import os

    from .evalgen import Knobs, generate_scenario, min_sup_sweep_csv, run_benchmark

    knobs = Knobs()
    if knobs_path:
        with open(knobs_path) as fp:
            knobs = Knobs.from_dict(json.load(fp))
    try:
        scenario = generate_scenario(seed, knobs)
        report = run_benchmark(scenario)
    except SigweaveError as exc:
        _fail(exc)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as fp:
        json.dump(report, fp, sort_keys=True, indent=2)
    with open(os.path.join(out_dir, "min_sup_sweep.csv"), "w") as fp:
        fp.write(min_sup_sweep_csv(report["sweeps"]["min_sup"]))
    for name, metrics in sorted(report["variants"].items()):
        click.echo(f"{name:18s} precision={metrics['precision']:.3f} f1={metrics['f1']:.3f}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--data-dir", type=click.Path())
@click.option("--host")
@click.option("--port", type=int)
@click.option("--run-first/--no-run-first", default=False,
              help="Execute one pipeline run before serving.")
def serve(config_path, data_dir, host, port, run_first):
    """Start the HTTP service over the data directory."""
    from .server import serve as serve_impl

    config = ServiceConfig.load(config_path)
    if data_dir:
        config.data_dir = data_dir
    if host:
        config.host = host
    if port:
        config.port = port
    if run_first:
        manifest = run_pipeline(config)
        click.echo(f"run {manifest.run_id} complete")
    serve_impl(config)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--data-dir", type=click.Path())
def run(config_path, data_dir):
    """Execute the full pipeline once over the data directory."""
    config = ServiceConfig.load(config_path)
    if data_dir:
        config.data_dir = data_dir
    try:
        manifest = run_pipeline(config)
    except SigweaveError as exc:
        _fail(exc)
    click.echo(f"run {manifest.run_id} complete")


if __name__ == "__main__":
    sys.exit(main())
