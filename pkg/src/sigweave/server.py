"""Service configuration, batch pipeline orchestration, and the HTTP API.

Persistence is flat JSON/JSONL artifacts under a data directory — no
database.  Each pipeline run writes its outputs under ``runs/<run-id>/``
where the run id is a digest of the input artifacts, the configuration,
and the feedback store, so identical inputs always map to the same run.
The HTTP layer is a read-mostly view over the latest run; feedback is
accepted at any time and folded in by the next re-correlation, which
executes as a single queued job.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .changes import ImageCatalog, link_changes
from .correlate import (
    AlertGroup,
    CorrelationConfig,
    SreRule,
    correlate,
    finalize_groups,
    read_groups_jsonl,
    write_groups_jsonl,
)
from .embed import ClusterModel, tokenize
from .errors import SigweaveError, UnknownGroup
from .feedback import FeedbackRecord, FeedbackStore, apply_feedback
from .localize import localize_group
from .logsig import LogStore, TemplateModel, build_signature
from .mine import PatternStore
from .model import ChangeRecord, read_events_jsonl
from .resolve import (
    EnrichedEvent,
    EntityDictionary,
    enrich_event,
    load_rules,
    read_enriched_jsonl,
    write_enriched_jsonl,
)
from .topology import TopologyGraph

logger = logging.getLogger(__name__)

DATA_DIR_ENV = "SIGWEAVE_DATA_DIR"


@dataclass
class ServiceConfig:
    """Filesystem layout and knobs for the pipeline and the service.

    All paths are resolved relative to ``data_dir`` unless absolute.
    The ``SIGWEAVE_DATA_DIR`` environment variable overrides the data
    directory from any config file.
    """

    data_dir: str = "."
    host: str = "127.0.0.1"
    port: int = 8787
    correlation: CorrelationConfig = field(default_factory=CorrelationConfig)
    events_path: str = "events.jsonl"
    topology_path: str = "topology.json"
    rules_path: str = "rules.json"
    dictionary_path: str = "dictionary.json"
    logs_path: str = "logs.jsonl"
    patterns_path: str = "patterns.json"
    sre_rules_path: str = "sre_rules.json"
    changes_path: str = "changes.jsonl"
    catalog_path: str = "catalog.json"
    feedback_path: str = "feedback.jsonl"
    log_window_ms: int = 600_000
    feedback_k: int = 8
    ui_dir: str = ""
    token: str = ""  # optional static bearer token

    def __post_init__(self):
        if not 0 < self.port < 65536:
            raise ValueError(f"invalid port {self.port}")

    def path(self, name: str) -> str:
        p = getattr(self, name)
        return p if os.path.isabs(p) else os.path.join(self.data_dir, p)

    def runs_dir(self) -> str:
        return os.path.join(self.data_dir, "runs")

    @classmethod
    def from_dict(cls, d: dict) -> "ServiceConfig":
        d = dict(d)
        corr = d.pop("correlation", None)
        cfg = cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})
        if corr:
            cfg.correlation = CorrelationConfig.from_dict(corr)
        if os.environ.get(DATA_DIR_ENV):
            cfg.data_dir = os.environ[DATA_DIR_ENV]
        return cfg

    @classmethod
    def load(cls, path: Optional[str] = None) -> "ServiceConfig":
        if path is None:
            cfg = cls()
            if os.environ.get(DATA_DIR_ENV):
                cfg.data_dir = os.environ[DATA_DIR_ENV]
            return cfg
        with open(path) as fp:
            return cls.from_dict(json.load(fp))

    def digest(self) -> str:
        doc = {k: getattr(self, k) for k in self.__dataclass_fields__
               if k not in ("correlation", "data_dir", "host", "port", "ui_dir", "token")}
        doc["correlation"] = {
            "temporal_window_ms": self.correlation.temporal_window_ms,
            "spatial_edge_types": list(self.correlation.spatial_edge_types),
            "log_template_threshold": self.correlation.log_template_threshold,
            "layers": list(self.correlation.layers),
        }
        return _sha256_text(json.dumps(doc, sort_keys=True))


def _sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _sha256_file(path: str) -> Optional[str]:
    if not os.path.exists(path):
        return None
    h = hashlib.sha256()
    with open(path, "rb") as fp:
        for chunk in iter(lambda: fp.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    run_id: str
    input_digests: Dict[str, Optional[str]]
    config_digest: str
    outputs: Dict[str, str]
    timings: Dict[str, float]

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "input_digests": self.input_digests,
            "config_digest": self.config_digest,
            "outputs": self.outputs,
            "timings": self.timings,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(run_id=d["run_id"], input_digests=dict(d["input_digests"]),
                   config_digest=d["config_digest"], outputs=dict(d["outputs"]),
                   timings=dict(d.get("timings") or {}))


_INPUT_NAMES = ("events_path", "topology_path", "rules_path", "dictionary_path",
                "logs_path", "patterns_path", "sre_rules_path", "changes_path",
                "catalog_path", "feedback_path")


def compute_run_id(config: ServiceConfig) -> str:
    """Deterministic run id from input digests and configuration."""
    digests = {name: _sha256_file(config.path(name)) for name in _INPUT_NAMES}
    payload = json.dumps({"inputs": digests, "config": config.digest()}, sort_keys=True)
    return _sha256_text(payload)[:12]


def run_pipeline(config: ServiceConfig) -> RunManifest:
    """normalize → enrich (resolve + logsig + changes) → correlate
    (+ feedback refinement) → localize; all artifacts written under
    runs/<run-id>/."""
    import time

    timings: Dict[str, float] = {}

    def tick(name: str, t0: float):
        timings[name] = round(time.perf_counter() - t0, 3)

    events_file = config.path("events_path")
    if not os.path.exists(events_file):
        raise SigweaveError(f"events file not found: {events_file}")

    t0 = time.perf_counter()
    with open(events_file) as fp:
        events = list(read_events_jsonl(fp))
    tick("read_events", t0)

    topo: Optional[TopologyGraph] = None
    topo_file = config.path("topology_path")
    if "spatial" in config.correlation.layers and not os.path.exists(topo_file):
        raise SigweaveError(f"topology file not found: {topo_file}")
    if os.path.exists(topo_file):
        topo = TopologyGraph.load_snapshot_file(topo_file)

    t0 = time.perf_counter()
    rules = load_rules(config.path("rules_path")) if os.path.exists(config.path("rules_path")) else []
    dictionary = (EntityDictionary.load(config.path("dictionary_path"))
                  if os.path.exists(config.path("dictionary_path")) else EntityDictionary())
    if topo is not None:
        enriched = [enrich_event(ev, rules, dictionary, topo) for ev in events]
    else:
        enriched = [EnrichedEvent(event=ev, entities={}, unresolved=[]) for ev in events]
    tick("enrich", t0)

    template_model = TemplateModel()
    logs_file = config.path("logs_path")
    if os.path.exists(logs_file):
        t0 = time.perf_counter()
        with open(logs_file) as fp:
            logs = LogStore.load_jsonl(fp)
        for ee in enriched:
            app = ee.event.features.get("application_id")
            sig = build_signature(ee.event, logs, template_model,
                                  config.log_window_ms,
                                  [app] if app else None)
            ee.log_signature = sig or None
        tick("logsig", t0)

    changes_file = config.path("changes_path")
    catalog_file = config.path("catalog_path")
    if os.path.exists(changes_file) and os.path.exists(catalog_file) and topo is not None:
        t0 = time.perf_counter()
        with open(changes_file) as fp:
            change_records = [ChangeRecord.from_dict(json.loads(line))
                              for line in fp if line.strip()]
        link_changes(enriched, change_records, ImageCatalog.load(catalog_file), topo)
        tick("changes", t0)

    patterns = (PatternStore.load(config.path("patterns_path"))
                if os.path.exists(config.path("patterns_path")) else None)
    sre_rules: List[SreRule] = []
    if os.path.exists(config.path("sre_rules_path")):
        with open(config.path("sre_rules_path")) as fp:
            sre_rules = [SreRule.from_dict(d) for d in json.load(fp)]

    t0 = time.perf_counter()
    groups = correlate(enriched, topo, config.correlation,
                       patterns=patterns, rules=sre_rules)
    tick("correlate", t0)

    store = FeedbackStore(config.path("feedback_path"))
    feedbacks = store.latest()
    ops_out: List[dict] = []
    if feedbacks and groups:
        t0 = time.perf_counter()
        final = finalize_groups(groups)
        by_key = {g.key: g for g in groups}
        id_pairs = [(d["group_id"], by_key[d["alert_ids"][0]]) for d in final]
        corpus = sorted({" ".join(tokenize(f"{ee.event.title} {ee.event.description}"))
                         for ee in enriched})
        k = max(1, min(config.feedback_k, len(corpus) - 1))
        model = ClusterModel.train(corpus, k=k)
        groups, ops = apply_feedback(
            id_pairs, feedbacks, model,
            window_ms=config.correlation.temporal_window_ms)
        ops_out = [op.to_dict() for op in ops]
        tick("feedback", t0)

    group_dicts = finalize_groups(groups)

    t0 = time.perf_counter()
    alerts_entities = {ee.event.id: ee.entity_ids for ee in enriched}
    localizations: Dict[str, dict] = {}
    for d in group_dicts:
        if not d["entities"] or topo is None:
            continue
        try:
            result = localize_group(d, alerts_entities, topo)
        except SigweaveError:
            continue
        localizations[d["group_id"]] = result.to_dict(d["group_id"])
    tick("localize", t0)

    run_id = compute_run_id(config)
    run_dir = os.path.join(config.runs_dir(), run_id)
    os.makedirs(run_dir, exist_ok=True)

    outputs: Dict[str, str] = {}

    def write(name: str, content: str):
        path = os.path.join(run_dir, name)
        with open(path, "w") as fp:
            fp.write(content)
        outputs[name] = _sha256_file(path)

    buf = io.StringIO()
    write_enriched_jsonl(enriched, buf)
    write("enriched.jsonl", buf.getvalue())
    buf = io.StringIO()
    write_groups_jsonl(group_dicts, buf)
    write("groups.jsonl", buf.getvalue())
    write("localizations.json", json.dumps(localizations, sort_keys=True, indent=2))
    write("template_model.json", json.dumps(template_model.to_dict(), sort_keys=True))
    write("refinements.json", json.dumps(ops_out, sort_keys=True, indent=2))

    manifest = RunManifest(
        run_id=run_id,
        input_digests={name: _sha256_file(config.path(name)) for name in _INPUT_NAMES},
        config_digest=config.digest(),
        outputs=outputs,
        timings=timings,
    )
    with open(os.path.join(run_dir, "manifest.json"), "w") as fp:
        json.dump(manifest.to_dict(), fp, sort_keys=True, indent=2)
    with open(os.path.join(config.data_dir, "latest_run"), "w") as fp:
        fp.write(run_id)
    return manifest


# -- HTTP service ------------------------------------------------------


class _Runner:
    """At most one correlation job at a time; extra triggers queue."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self._executor = ThreadPoolExecutor(max_workers=1)
        self._lock = threading.Lock()
        self._pending: Dict[str, object] = {}

    def submit(self) -> Tuple[str, bool]:
        """Returns (run_id, already_done)."""
        run_id = compute_run_id(self.config)
        manifest_path = os.path.join(self.config.runs_dir(), run_id, "manifest.json")
        if os.path.exists(manifest_path):
            return run_id, True
        with self._lock:
            if run_id not in self._pending:
                self._pending[run_id] = self._executor.submit(self._run, run_id)
        return run_id, False

    def _run(self, run_id: str):
        try:
            run_pipeline(self.config)
        except Exception:
            logger.exception("pipeline run %s failed", run_id)
        finally:
            with self._lock:
                self._pending.pop(run_id, None)

    def status(self, run_id: str) -> str:
        with self._lock:
            if run_id in self._pending:
                return "pending"
        if os.path.exists(os.path.join(self.config.runs_dir(), run_id, "manifest.json")):
            return "done"
        return "unknown"

    def wait(self):
        """Block until the queue drains (used by tests)."""
        while True:
            with self._lock:
                futures = list(self._pending.values())
            if not futures:
                return
            for f in futures:
                f.result()


def _latest_run_dir(config: ServiceConfig) -> Optional[str]:
    marker = os.path.join(config.data_dir, "latest_run")
    if not os.path.exists(marker):
        return None
    with open(marker) as fp:
        run_id = fp.read().strip()
    run_dir = os.path.join(config.runs_dir(), run_id)
    return run_dir if os.path.exists(run_dir) else None


def create_app(config: ServiceConfig):
    # imported here so batch CLI use never pays the FastAPI import cost;
    # names are rebound into module globals for annotation resolution
    from fastapi import FastAPI, HTTPException, Request
    from fastapi.responses import JSONResponse

    globals().setdefault("Request", Request)

    app = FastAPI(title="sigweave", docs_url=None, redoc_url=None)
    runner = _Runner(config)
    app.state.runner = runner
    app.state.config = config

    def check_auth(request: Request):
        if config.token:
            header = request.headers.get("authorization", "")
            if header != f"Bearer {config.token}":
                raise HTTPException(status_code=401, detail="invalid token")

    def load_groups() -> List[dict]:
        run_dir = _latest_run_dir(config)
        if run_dir is None:
            raise HTTPException(status_code=404, detail="no completed run")
        with open(os.path.join(run_dir, "groups.jsonl")) as fp:
            return read_groups_jsonl(fp)

    def load_alerts() -> Dict[str, dict]:
        run_dir = _latest_run_dir(config)
        if run_dir is None:
            raise HTTPException(status_code=404, detail="no completed run")
        with open(os.path.join(run_dir, "enriched.jsonl")) as fp:
            return {d["event"]["id"]: d for d in map(json.loads, filter(str.strip, fp))}

    def feedback_state() -> Dict[str, List[dict]]:
        store = FeedbackStore(config.path("feedback_path"))
        state: Dict[str, List[dict]] = {}
        for rec in store.latest():
            state.setdefault(rec.group_id, []).append(rec.to_dict())
        return state

    @app.get("/api/groups")
    def get_groups(request: Request, severity: Optional[str] = None,
                   entity: Optional[str] = None,
                   since: Optional[int] = None, until: Optional[int] = None,
                   limit: int = 500, offset: int = 0):
        check_auth(request)
        groups = load_groups()
        alerts = load_alerts()
        fb = feedback_state()
        out = []
        for g in groups:
            sevs = [alerts[a]["event"]["severity"] for a in g["alert_ids"] if a in alerts]
            if severity is not None and severity not in sevs:
                continue
            if entity is not None and entity not in g["entities"]:
                continue
            if since is not None and g["interval"][1] < since:
                continue
            if until is not None and g["interval"][0] > until:
                continue
            view = dict(g)
            view["size"] = len(g["alert_ids"])
            view["severities"] = sorted(set(sevs))
            view["feedback"] = fb.get(g["group_id"], [])
            out.append(view)
        return out[offset:offset + limit]

    @app.get("/api/groups/{group_id}")
    def get_group(group_id: str, request: Request):
        check_auth(request)
        for g in load_groups():
            if g["group_id"] == group_id:
                alerts = load_alerts()
                view = dict(g)
                view["alerts"] = [alerts[a] for a in g["alert_ids"] if a in alerts]
                view["feedback"] = feedback_state().get(group_id, [])
                return view
        raise HTTPException(status_code=404, detail=f"unknown group {group_id}")

    @app.get("/api/groups/{group_id}/localization")
    def get_localization(group_id: str, request: Request):
        check_auth(request)
        run_dir = _latest_run_dir(config)
        if run_dir is None:
            raise HTTPException(status_code=404, detail="no completed run")
        with open(os.path.join(run_dir, "localizations.json")) as fp:
            localizations = json.load(fp)
        if group_id not in localizations:
            raise HTTPException(status_code=404,
                                detail=f"no localization for {group_id}")
        return localizations[group_id]

    @app.get("/api/alerts/{alert_id}")
    def get_alert(alert_id: str, request: Request):
        check_auth(request)
        alerts = load_alerts()
        if alert_id not in alerts:
            raise HTTPException(status_code=404, detail=f"unknown alert {alert_id}")
        return alerts[alert_id]

    @app.post("/api/feedback")
    def post_feedback(body: dict, request: Request):
        check_auth(request)
        try:
            rec = FeedbackRecord.from_dict({
                "group_id": body["group_id"],
                "verdict": body["verdict"],
                "author": body.get("author", "anonymous"),
                "ts": int(body.get("ts", 0)),
                "flags": body.get("flags"),
            })
        except (KeyError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        known = {g["group_id"] for g in load_groups()}
        store = FeedbackStore(config.path("feedback_path"))
        try:
            key = store.record(rec, known_groups=known)
        except UnknownGroup as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return {"id": key, "group_id": rec.group_id, "verdict": rec.verdict}

    @app.post("/api/recorrelate")
    def post_recorrelate(request: Request):
        check_auth(request)
        run_id, done = runner.submit()
        return {"run_id": run_id, "status": "done" if done else "pending"}

    @app.get("/api/runs/{run_id}")
    def get_run(run_id: str, request: Request):
        check_auth(request)
        manifest_path = os.path.join(config.runs_dir(), run_id, "manifest.json")
        if os.path.exists(manifest_path):
            with open(manifest_path) as fp:
                doc = json.load(fp)
            doc["status"] = "done"
            return doc
        if runner.status(run_id) == "pending":
            return JSONResponse({"run_id": run_id, "status": "pending"})
        raise HTTPException(status_code=404, detail=f"unknown run {run_id}")

    ui_dir = config.ui_dir or os.path.join(config.data_dir, "ui")
    if os.path.isdir(ui_dir):
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def serve(config: ServiceConfig):
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
