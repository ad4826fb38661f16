import importlib.resources
import json

from sigweave.model import NormalizedEvent, Severity, read_events_jsonl
from sigweave.resolve import (
    EnrichedEvent,
    EntityDictionary,
    MatcherRule,
    enrich_event,
    extract_with_dictionary,
    extract_with_templates,
)
from sigweave.topology import TopologyGraph

DATA = importlib.resources.files("sigweave") / "data" / "resolution"


def load_corpus():
    topo = TopologyGraph.load_snapshot(json.loads((DATA / "topology.json").read_text()))
    rules = [MatcherRule.from_dict(d)
             for d in json.loads((DATA / "rules.json").read_text())]
    dictionary = EntityDictionary.from_dict(
        json.loads((DATA / "dictionary.json").read_text()))
    with (DATA / "events.jsonl").open() as fp:
        events = list(read_events_jsonl(fp))
    return topo, rules, dictionary, events


def ev(title="t", description="", features=None):
    return NormalizedEvent(id="x/1", title=title, description=description,
                           created_at=0, severity=Severity.INFO, source="x",
                           features=features or {})


def test_dotnet_named_groups_translate():
    rule = MatcherRule.from_dict(
        {"id": "r", "path": "title", "pattern": "on (?<fqdn>[a-z.]+)", "kind": "fqdn"})
    refs = extract_with_templates(ev(title="disk pressure on mon.example.net"), [rule])
    assert [(r.kind, r.value) for r in refs] == [("fqdn", "mon.example.net")]


def test_template_rule_against_feature_path():
    rule = MatcherRule.from_dict(
        {"id": "r", "path": "features.host", "pattern": "(?<fqdn>.+)", "kind": "fqdn"})
    refs = extract_with_templates(ev(features={"host": "db.example.net"}), [rule])
    assert refs and refs[0].value == "db.example.net"
    # absent path simply yields nothing
    assert extract_with_templates(ev(), [rule]) == []


def test_dictionary_longest_match_wins():
    d = EntityDictionary(dns_suffixes=["prod.example.net"],
                         image_stems=["registry.example.com/billing-api"])
    refs = extract_with_dictionary(
        ev(description="rollout registry.example.com/billing-api:2.3.1 on "
                       "web-01.prod.example.net"), d)
    values = sorted(r.value for r in refs)
    assert values == ["registry.example.com/billing-api:2.3.1",
                      "web-01.prod.example.net"]


def test_enrich_union_of_paths():
    topo, rules, dictionary, events = load_corpus()
    for event in events:
        ee = enrich_event(event, rules, dictionary, topo)
        t_only = enrich_event(event, rules, EntityDictionary(), topo)
        d_only = enrich_event(event, [], dictionary, topo)
        union = set(ee.entity_ids)
        assert set(t_only.entity_ids) <= union
        assert set(d_only.entity_ids) <= union
        assert union == set(t_only.entity_ids) | set(d_only.entity_ids)


def test_enrich_merges_provenance():
    topo, rules, dictionary, events = load_corpus()
    # ev-01: features.host carries a prod fqdn hit by both rule and dictionary
    ee = enrich_event(events[0], rules, dictionary, topo)
    refs = ee.entities["h-web01"]
    prov = {p for r in refs for p in r.provenance}
    assert any(p.startswith("template:") for p in prov)
    assert any(p.startswith("dictionary:") for p in prov)


def test_unresolved_refs_kept_with_reason():
    topo = TopologyGraph()
    rule = MatcherRule.from_dict(
        {"id": "r", "path": "title", "pattern": "(?<name>ghost-svc)", "kind": "name"})
    ee = enrich_event(ev(title="ghost-svc down"), [rule], EntityDictionary(), topo)
    assert ee.entities == {}
    assert [r.value for r in ee.unresolved] == ["ghost-svc"]


def test_enriched_round_trip():
    topo, rules, dictionary, events = load_corpus()
    ee = enrich_event(events[0], rules, dictionary, topo)
    assert EnrichedEvent.from_dict(ee.to_dict()).to_dict() == ee.to_dict()
