import random

import pytest

from sigweave.errors import NoResolvedEntities
from sigweave.localize import (
    SignalOverlay,
    blast_radius,
    find_roots,
    localize_group,
)
from sigweave.topology import TopologyGraph


def chain_topo():
    """app -> depends -> svc -> runs -> host."""
    topo = TopologyGraph()
    for nid, ntype in (("app", "application"), ("svc", "application"),
                       ("host", "host")):
        topo.add_node(ntype, nid, node_id=nid, valid_from=0)
    topo.add_edge("dependsOn", "app", "svc", valid_from=0)
    topo.add_edge("runsOn", "svc", "host", valid_from=0)
    return topo


def test_root_is_deepest_signaled():
    topo = chain_topo()
    assert find_roots(["app", "svc"], topo, at=0) == ["svc"]
    assert find_roots(["app", "host"], topo, at=0) == ["host"]
    assert find_roots(["app"], topo, at=0) == ["app"]


def test_root_through_unsignaled_intermediate():
    topo = chain_topo()
    # host is downstream of app via the unsignaled svc
    assert find_roots(["app", "host"], topo, at=0) == ["host"]


def test_cyclic_signals_are_co_roots():
    topo = TopologyGraph()
    for nid in ("a", "b", "c"):
        topo.add_node("application", nid, node_id=nid, valid_from=0)
    topo.add_edge("dependsOn", "a", "b", valid_from=0)
    topo.add_edge("dependsOn", "b", "a", valid_from=0)
    topo.add_edge("dependsOn", "c", "a", valid_from=0)
    assert find_roots(["a", "b", "c"], topo, at=0) == ["a", "b"]


def test_blast_radius_is_inverse_closure():
    topo = chain_topo()
    assert blast_radius(["host"], topo, at=0) == {"app", "svc", "host"}
    assert blast_radius(["svc"], topo, at=0) == {"app", "svc"}
    with pytest.raises(ValueError):
        blast_radius([], topo, at=0)


def test_no_resolved_entities():
    with pytest.raises(NoResolvedEntities):
        find_roots([], chain_topo(), at=0)
    with pytest.raises(NoResolvedEntities):
        find_roots(["ghost"], chain_topo(), at=0)


def test_localize_group_explanations():
    topo = chain_topo()
    group = {"group_id": "g1", "alert_ids": ["x", "y"], "interval": [0, 10]}
    res = localize_group(group, {"x": ["app"], "y": ["svc"]}, topo)
    assert res.roots == ["svc"]
    assert set(res.blast_radius) == {"app", "svc"}
    assert res.explanations["svc"].startswith("root:")
    assert res.explanations["app"] == "signaled, depends on a root"


def test_signal_overlay_collects_alerts():
    group = {"group_id": "g", "alert_ids": ["x", "y"], "interval": [0, 5]}
    ov = SignalOverlay.from_group(group, {"x": ["n1"], "y": ["n1", "n2"]}, at=5)
    assert ov.signals == {"n1": ["x", "y"], "n2": ["y"]}


# -- random-DAG oracle --------------------------------------------------


def random_dag(rng, n):
    """Random DAG on a topological order; returns (topo, adjacency)."""
    topo = TopologyGraph(strict=False)
    nodes = [f"n{i:02d}" for i in range(n)]
    for nid in nodes:
        topo.add_node("application", nid, node_id=nid, valid_from=0)
    adj = {nid: set() for nid in nodes}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < min(0.2, 4.0 / n):
                etype = rng.choice(["dependsOn", "runsOn"])
                topo.add_edge(etype, nodes[i], nodes[j], valid_from=0)
                adj[nodes[i]].add(nodes[j])
    return topo, adj


def closure(adj, start):
    seen, frontier = set(), [start]
    while frontier:
        u = frontier.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                frontier.append(v)
    return seen


def test_random_dag_oracle():
    rng = random.Random(1312)
    for trial in range(100):
        n = rng.randint(2, 50)
        topo, adj = random_dag(rng, n)
        nodes = sorted(adj)
        signaled = rng.sample(nodes, rng.randint(1, n))

        # oracle: signaled nodes with no signaled node in their closure
        want_roots = sorted(s for s in signaled
                            if not (closure(adj, s) & set(signaled) - {s}))
        got_roots = find_roots(signaled, topo, at=0)
        assert got_roots == want_roots, f"trial {trial}"

        # oracle: roots plus every node that reaches a root
        radj = {u: set() for u in adj}
        for u, vs in adj.items():
            for v in vs:
                radj[v].add(u)
        want_radius = set(want_roots)
        for r in want_roots:
            want_radius |= closure(radj, r)
        assert blast_radius(got_roots, topo, at=0) == want_radius, f"trial {trial}"
