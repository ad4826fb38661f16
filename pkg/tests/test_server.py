import hashlib
import json
import os

import pytest

from sigweave.server import ServiceConfig, compute_run_id, create_app, run_pipeline

EPOCH = 1_609_459_200_000


def write_inputs(d):
    topo = {"snapshot_time": 0, "nodes": [
        {"id": "ctr-a", "type": "container", "name": "ctr-a"},
        {"id": "host-1", "type": "host", "name": "host-1"},
        {"id": "app-1", "type": "application", "name": "app-1"},
        {"id": "host-2", "type": "host", "name": "host-2"},
        {"id": "ctr-b", "type": "container", "name": "ctr-b"},
    ], "edges": [
        {"id": "e1", "type": "runsOn", "src": "ctr-a", "dst": "host-1"},
        {"id": "e2", "type": "runsOn", "src": "app-1", "dst": "ctr-a"},
        {"id": "e3", "type": "runsOn", "src": "ctr-b", "dst": "host-2"},
    ]}
    (d / "topology.json").write_text(json.dumps(topo))
    (d / "rules.json").write_text(json.dumps(
        [{"id": "r-ent", "path": "features.entity",
          "pattern": "(?<e>.+)", "kind": "node_id"}]))
    events = [
        {"id": "a1", "title": "cpu saturation", "description": "cpu pegged",
         "created_at": EPOCH, "resolved_at": None, "severity": "critical",
         "source": "mon", "features": {"entity": "ctr-a", "alert_type": "cpu"}},
        {"id": "a2", "title": "memory saturation", "description": "oom close",
         "created_at": EPOCH + 20_000, "resolved_at": None, "severity": "error",
         "source": "mon", "features": {"entity": "ctr-a", "alert_type": "mem"}},
        {"id": "a3", "title": "probe blip", "description": "independent noise",
         "created_at": EPOCH + 40_000, "resolved_at": None, "severity": "warning",
         "source": "mon", "features": {"entity": "ctr-b", "alert_type": "probe"}},
    ]
    with open(d / "events.jsonl", "w") as fp:
        for e in events:
            fp.write(json.dumps(e, sort_keys=True) + "\n")


@pytest.fixture
def config(tmp_path):
    write_inputs(tmp_path)
    return ServiceConfig(data_dir=str(tmp_path))


def digest_tree(root):
    out = {}
    for base, _, files in os.walk(root):
        for f in files:
            p = os.path.join(base, f)
            with open(p, "rb") as fp:
                out[os.path.relpath(p, root)] = hashlib.sha256(fp.read()).hexdigest()
    return out


def test_run_pipeline_idempotent(config):
    m1 = run_pipeline(config)
    d1 = digest_tree(os.path.join(config.data_dir, "runs", m1.run_id))
    m2 = run_pipeline(config)
    assert m2.run_id == m1.run_id
    assert digest_tree(os.path.join(config.data_dir, "runs", m2.run_id)) == d1
    assert m1.outputs == m2.outputs


def test_run_id_tracks_inputs(config, tmp_path):
    before = compute_run_id(config)
    with open(tmp_path / "events.jsonl", "a") as fp:
        fp.write(json.dumps({"id": "a4", "title": "t", "description": "",
                             "created_at": EPOCH, "resolved_at": None,
                             "severity": "info", "source": "mon",
                             "features": {}}) + "\n")
    assert compute_run_id(config) != before


@pytest.fixture
def client(config):
    from fastapi.testclient import TestClient
    run_pipeline(config)
    return TestClient(create_app(config))


def test_groups_listing_and_filters(client):
    groups = client.get("/api/groups").json()
    sizes = sorted(len(g["alert_ids"]) for g in groups)
    assert sizes == [1, 2]
    crit = client.get("/api/groups", params={"severity": "critical"}).json()
    assert all("critical" in g["severities"] for g in crit)
    ent = client.get("/api/groups", params={"entity": "ctr-b"}).json()
    assert [g["alert_ids"] for g in ent] == [["a3"]]
    since = client.get("/api/groups", params={"since": EPOCH + 30_000}).json()
    assert [g["alert_ids"] for g in since] == [["a3"]]


def test_group_detail_and_localization(client):
    groups = client.get("/api/groups").json()
    big = next(g for g in groups if len(g["alert_ids"]) == 2)
    detail = client.get(f"/api/groups/{big['group_id']}").json()
    assert {a["event"]["id"] for a in detail["alerts"]} == set(big["alert_ids"])
    loc = client.get(f"/api/groups/{big['group_id']}/localization").json()
    assert loc["roots"] == ["ctr-a"]
    assert client.get("/api/groups/grp-99999").status_code == 404


def test_alert_endpoint(client):
    alert = client.get("/api/alerts/a1").json()
    assert alert["event"]["title"] == "cpu saturation"
    assert client.get("/api/alerts/ghost").status_code == 404


def test_feedback_validation(client):
    assert client.post("/api/feedback", json={"verdict": "down"}).status_code == 422
    assert client.post("/api/feedback",
                       json={"group_id": "grp-99999", "verdict": "down",
                             "author": "x"}).status_code == 404
    ok = client.post("/api/feedback",
                     json={"group_id": "grp-00001", "verdict": "down",
                           "author": "sre1"})
    assert ok.status_code == 200


def test_feedback_then_recorrelate_replays_votes(client, config):
    groups = client.get("/api/groups").json()
    big = next(g for g in groups if len(g["alert_ids"]) == 2)
    client.post("/api/feedback", json={"group_id": big["group_id"],
                                       "verdict": "down", "author": "sre1",
                                       "flags": {big["alert_ids"][1]: False}})
    r = client.post("/api/recorrelate").json()
    client.app.state.runner.wait()
    status = client.get(f"/api/runs/{r['run_id']}").json()
    assert status["status"] == "done"
    # the vote was replayed: a split op is on record for the voted group
    refinements = json.loads(open(os.path.join(
        config.data_dir, "runs", r["run_id"], "refinements.json")).read())
    assert any(op["kind"] == "split" and op["inputs"] == [big["group_id"]]
               for op in refinements)
    # and the result still partitions the alert set
    after = client.get("/api/groups").json()
    ids = sorted(a for g in after for a in g["alert_ids"])
    assert ids == ["a1", "a2", "a3"]


def test_runs_endpoint_unknown(client):
    assert client.get("/api/runs/ffffffffffff").status_code == 404


def test_token_auth(tmp_path):
    from fastapi.testclient import TestClient
    write_inputs(tmp_path)
    config = ServiceConfig(data_dir=str(tmp_path), token="sesame")
    run_pipeline(config)
    c = TestClient(create_app(config))
    assert c.get("/api/groups").status_code == 401
    ok = c.get("/api/groups", headers={"Authorization": "Bearer sesame"})
    assert ok.status_code == 200


def test_ui_mounted_when_assets_exist(tmp_path):
    from fastapi.testclient import TestClient
    write_inputs(tmp_path)
    ui = tmp_path / "ui"
    ui.mkdir()
    (ui / "index.html").write_text("<!doctype html><title>console</title>")
    config = ServiceConfig(data_dir=str(tmp_path))
    run_pipeline(config)
    c = TestClient(create_app(config))
    page = c.get("/ui/index.html")
    assert page.status_code == 200 and "console" in page.text
