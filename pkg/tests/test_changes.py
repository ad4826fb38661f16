from sigweave.changes import (
    ImageCatalog,
    extract_image_refs,
    link_changes,
    map_changes_to_nodes,
)
from sigweave.embed import Vectorizer
from sigweave.model import ChangeRecord
from sigweave.topology import TopologyGraph

from conftest import mk_alert


CATALOG = ImageCatalog.from_dict({
    "images": ["registry.example.com/billing-api", "registry.example.com/search-svc"],
    "tags": {"registry.example.com/billing-api": ["2.3.1"],
             "registry.example.com/search-svc": ["1.0.0"]},
    "nodes": {"registry.example.com/billing-api": ["ctr-1"],
              "registry.example.com/search-svc": ["ctr-2"]},
})


def build_topo():
    topo = TopologyGraph()
    topo.add_node("container", "ctr-1", node_id="ctr-1", valid_from=0)
    topo.add_node("container", "ctr-2", node_id="ctr-2", valid_from=0)
    topo.add_node("host", "host-1", node_id="host-1", valid_from=0)
    topo.add_edge("runsOn", "ctr-1", "host-1", valid_from=0)
    return topo


def change(desc, cid="CH1", started=0, ended=100):
    return ChangeRecord(id=cid, title="deploy", description=desc,
                        started_at=started, ended_at=ended)


def test_stage1_direct_image_mention():
    refs = extract_image_refs(
        change("rollout registry.example.com/billing-api:2.3.1 to prod"), CATALOG)
    assert refs == ["registry.example.com/billing-api:2.3.1"]


def test_stage2_tag_only_mention():
    refs = extract_image_refs(change("promote build 2.3.1 everywhere"), CATALOG)
    assert refs == ["registry.example.com/billing-api:2.3.1"]


def test_stage3_inherits_from_similar_prior():
    prior = change("quarterly billing platform maintenance rollout", cid="CH0")
    cur = change("quarterly billing platform maintenance rollout again", cid="CH2")
    vec = Vectorizer.fit([cur.description, prior.description])
    refs = extract_image_refs(
        cur, ImageCatalog(),  # nothing matches stages 1-2
        prior_changes=[(prior, ["registry.example.com/billing-api"])],
        vectorizer=vec, similarity_threshold=0.5)
    assert refs == ["registry.example.com/billing-api"]


def test_map_changes_to_nodes():
    mapping = map_changes_to_nodes(
        [change("rollout registry.example.com/billing-api:2.3.1")], CATALOG)
    assert mapping == {"CH1": ["ctr-1"]}


def test_link_changes_window_and_entity():
    topo = build_topo()
    alerts = [
        mk_alert("a1", 3_600_000, ["ctr-1"]),    # within lookback of CH1's end
        mk_alert("a2", 999_999_999, ["ctr-1"]),  # far later: no link
        mk_alert("a3", 3_600_000, ["ctr-2"]),    # other entity: no link
        mk_alert("a4", 3_600_000, ["host-1"]),   # one runsOn hop away: linked
    ]
    link_changes(alerts, [change("deploy registry.example.com/billing-api:2.3.1",
                                 started=0, ended=100)],
                 CATALOG, topo)
    assert alerts[0].change_ids == ["CH1"]
    assert alerts[1].change_ids == []
    assert alerts[2].change_ids == []
    assert alerts[3].change_ids == ["CH1"]


def test_change_before_alert_only():
    topo = build_topo()
    alerts = [mk_alert("a1", 50, ["ctr-1"])]  # alert precedes the change end
    link_changes(alerts, [change("deploy registry.example.com/billing-api:2.3.1",
                                 started=0, ended=100)],
                 CATALOG, topo)
    assert alerts[0].change_ids == []
