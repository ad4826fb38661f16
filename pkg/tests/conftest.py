import pytest

from sigweave.model import NormalizedEvent, Severity
from sigweave.resolve import EnrichedEvent, EntityRef
from sigweave.topology import TopologyGraph

EPOCH = 1_609_459_200_000


def mk_alert(aid, ts, entities=(), title="cpu saturation", description="",
             source="mon", event_type="cpu-high", features=None):
    f = {"alert_type": event_type}
    f.update(features or {})
    ev = NormalizedEvent(id=aid, title=title, description=description or title,
                         created_at=ts, severity=Severity.CRITICAL,
                         source=source, features=f)
    ents = {e: [EntityRef(kind="node_id", value=e, provenance=["test"])]
            for e in entities}
    return EnrichedEvent(event=ev, entities=ents, unresolved=[])


@pytest.fixture
def small_topo():
    """srv <- host <- {ctr-a, ctr-b}; app-a runsOn ctr-a; app-b dependsOn app-a."""
    topo = TopologyGraph()
    topo.add_node("server", "srv-1", node_id="srv-1", valid_from=0)
    topo.add_node("host", "host-1", node_id="host-1", valid_from=0)
    topo.add_node("container", "ctr-a", node_id="ctr-a", valid_from=0)
    topo.add_node("container", "ctr-b", node_id="ctr-b", valid_from=0)
    topo.add_node("application", "app-a", node_id="app-a", valid_from=0)
    topo.add_node("application", "app-b", node_id="app-b", valid_from=0)
    topo.add_edge("runsOn", "host-1", "srv-1", valid_from=0)
    topo.add_edge("runsOn", "ctr-a", "host-1", valid_from=0)
    topo.add_edge("runsOn", "ctr-b", "host-1", valid_from=0)
    topo.add_edge("runsOn", "app-a", "ctr-a", valid_from=0)
    topo.add_edge("dependsOn", "app-b", "app-a", valid_from=0)
    return topo
