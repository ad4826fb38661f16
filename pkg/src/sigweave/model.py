"""Normalized operational data model and source adapters.

Every raw payload entering the engine is converted into a
:class:`NormalizedEvent` carrying the minimal field set the downstream
stages need (title, description, created_at, resolved_at, severity,
source) plus an open ``features`` map for anything source-specific.
Timestamps are epoch milliseconds UTC throughout.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Iterable, Iterator, Mapping, Optional, TextIO, Union

from .errors import (
    MissingMandatoryField,
    UnknownSeverityToken,
    UnparsableTimestamp,
)

FeatureValue = Union[str, int, float, dict]


class Severity(str, Enum):
    CRITICAL = "critical"
    ERROR = "error"
    WARNING = "warning"
    INFO = "info"


class ChangeState(str, Enum):
    OPEN = "open"
    CLOSED = "closed"


class ClosureCode(str, Enum):
    SUCCESSFUL = "successful"
    FAILED = "failed"
    INDUCED_ISSUES = "induced_issues"


def parse_timestamp(value: Any, fmt: str = "iso8601") -> int:
    """Parse a raw timestamp into epoch milliseconds UTC.

    ``fmt`` is one of ``iso8601``, ``epoch_s``, ``epoch_ms`` or a
    strptime format string (naive values are taken as UTC).
    """
    try:
        if fmt == "epoch_ms":
            return int(value)
        if fmt == "epoch_s":
            return int(round(float(value) * 1000))
        if fmt == "iso8601":
            text = str(value).strip()
            if text.endswith("Z"):
                text = text[:-1] + "+00:00"
            dt = datetime.fromisoformat(text)
        else:
            dt = datetime.strptime(str(value), fmt)
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return int(round(dt.timestamp() * 1000))
    except (ValueError, TypeError, OverflowError) as exc:
        raise UnparsableTimestamp(f"cannot parse timestamp {value!r} with format {fmt!r}") from exc


def format_timestamp(ms: int) -> str:
    """Epoch milliseconds to ISO-8601 UTC with millisecond precision."""
    dt = datetime.fromtimestamp(ms / 1000.0, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{ms % 1000:03d}Z"


@dataclass(frozen=True)
class NormalizedEvent:
    id: str
    title: str
    description: str
    created_at: int  # epoch ms UTC
    severity: Severity
    source: str
    resolved_at: Optional[int] = None
    features: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.id:
            raise ValueError("event id must be non-empty")
        if self.resolved_at is not None and self.resolved_at < self.created_at:
            raise ValueError(f"resolved_at < created_at for event {self.id}")
        if not isinstance(self.severity, Severity):
            object.__setattr__(self, "severity", Severity(self.severity))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "description": self.description,
            "created_at": self.created_at,
            "resolved_at": self.resolved_at,
            "severity": self.severity.value,
            "source": self.source,
            "features": self.features,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "NormalizedEvent":
        return cls(
            id=d["id"],
            title=d["title"],
            description=d.get("description", ""),
            created_at=int(d["created_at"]),
            resolved_at=None if d.get("resolved_at") is None else int(d["resolved_at"]),
            severity=Severity(d["severity"]),
            source=d["source"],
            features=dict(d.get("features") or {}),
        )


@dataclass
class AdapterConfig:
    """Declarative mapping from one raw source format to the normal form.

    ``mappings`` maps normalized field names (title, description,
    created_at, resolved_at, severity, id) to dotted paths into the raw
    document.  ``constants`` supplies fixed values for fields with no raw
    counterpart.  ``severity_map`` translates raw severity tokens.
    """

    source: str
    mappings: dict
    severity_map: dict
    timestamp_format: str = "iso8601"
    constants: dict = field(default_factory=dict)

    MANDATORY = ("title", "created_at", "severity")

    def __post_init__(self):
        for f in self.MANDATORY:
            if f not in self.mappings and f not in self.constants:
                raise ValueError(f"adapter for {self.source!r} maps neither path nor constant for {f!r}")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AdapterConfig":
        return cls(
            source=d["source"],
            mappings=dict(d.get("mappings") or {}),
            severity_map=dict(d.get("severity_map") or {}),
            timestamp_format=d.get("timestamp_format", "iso8601"),
            constants=dict(d.get("constants") or {}),
        )


@dataclass
class ChangeRecord:
    id: str
    title: str = ""
    description: str = ""
    purpose: str = ""
    environment: str = ""
    requested_at: Optional[int] = None
    started_at: Optional[int] = None
    ended_at: Optional[int] = None
    team: str = ""
    state: ChangeState = ChangeState.CLOSED
    closure_code: Optional[ClosureCode] = None
    backout_plan: str = ""
    close_notes: str = ""
    configuration_items: list = field(default_factory=list)

    def __post_init__(self):
        if self.started_at is not None and self.ended_at is not None and self.started_at > self.ended_at:
            raise ValueError(f"change {self.id}: start date after end date")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "description": self.description,
            "purpose": self.purpose,
            "environment": self.environment,
            "requested_at": self.requested_at,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
            "team": self.team,
            "state": self.state.value,
            "closure_code": self.closure_code.value if self.closure_code else None,
            "backout_plan": self.backout_plan,
            "close_notes": self.close_notes,
            "configuration_items": list(self.configuration_items),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ChangeRecord":
        return cls(
            id=d["id"],
            title=d.get("title", ""),
            description=d.get("description", ""),
            purpose=d.get("purpose", ""),
            environment=d.get("environment", ""),
            requested_at=d.get("requested_at"),
            started_at=d.get("started_at"),
            ended_at=d.get("ended_at"),
            team=d.get("team", ""),
            state=ChangeState(d.get("state", "closed")),
            closure_code=ClosureCode(d["closure_code"]) if d.get("closure_code") else None,
            backout_plan=d.get("backout_plan", ""),
            close_notes=d.get("close_notes", ""),
            configuration_items=list(d.get("configuration_items") or []),
        )


@dataclass
class IncidentRecord:
    id: str
    title: str = ""
    description: str = ""
    opened_at: Optional[int] = None
    severity: Optional[Severity] = None
    impacted_items: list = field(default_factory=list)
    outage_start: Optional[int] = None
    outage_end: Optional[int] = None
    state: str = "open"  # resolved | open
    resolution: str = ""
    caused_by_change: Optional[str] = None

    def __post_init__(self):
        if self.outage_start is not None and self.outage_end is not None and self.outage_start > self.outage_end:
            raise ValueError(f"incident {self.id}: outage start after end")


def _lookup_path(doc: Mapping[str, Any], path: str):
    """Follow a dotted path into a nested mapping; None when absent."""
    cur: Any = doc
    for part in path.split("."):
        if not isinstance(cur, Mapping) or part not in cur:
            return None
        cur = cur[part]
    return cur


def _flatten_features(doc: Mapping[str, Any], consumed: set) -> dict:
    """Preserve unmapped raw fields, capping nesting at one level of maps."""
    out: dict = {}
    for key, value in doc.items():
        if key in consumed:
            continue
        if isinstance(value, Mapping):
            sub = {}
            for k2, v2 in value.items():
                if f"{key}.{k2}" in consumed:
                    continue
                sub[k2] = v2 if not isinstance(v2, Mapping) else json.dumps(v2, sort_keys=True)
            if sub:
                out[key] = sub
        else:
            out[key] = value
    return out


def normalize_event(raw: Mapping[str, Any], adapter: AdapterConfig) -> NormalizedEvent:
    """Convert one raw source document into a NormalizedEvent.

    Raises MissingMandatoryField, UnparsableTimestamp or
    UnknownSeverityToken; never returns a partially valid record.
    """
    def pull(name: str, mandatory: bool):
        if name in adapter.mappings:
            path = adapter.mappings[name]
            value = _lookup_path(raw, path)
            if value is None:
                if name in adapter.constants:
                    return adapter.constants[name]
                if mandatory:
                    raise MissingMandatoryField(name)
                return None
            return value
        if name in adapter.constants:
            return adapter.constants[name]
        if mandatory:
            raise MissingMandatoryField(name)
        return None

    title = str(pull("title", mandatory=True))
    description_raw = pull("description", mandatory=False)
    description = "" if description_raw is None else str(description_raw)

    created_raw = pull("created_at", mandatory=True)
    created_at = parse_timestamp(created_raw, adapter.timestamp_format)
    resolved_raw = pull("resolved_at", mandatory=False)
    resolved_at = None if resolved_raw is None else parse_timestamp(resolved_raw, adapter.timestamp_format)

    sev_token = str(pull("severity", mandatory=True))
    if sev_token in (s.value for s in Severity):
        severity = Severity(sev_token)
    elif sev_token in adapter.severity_map:
        severity = Severity(adapter.severity_map[sev_token])
    else:
        raise UnknownSeverityToken(sev_token)

    raw_id = pull("id", mandatory=False)
    if raw_id is not None:
        event_id = f"{adapter.source}/{raw_id}"
    else:
        digest = hashlib.sha256(f"{adapter.source}\x00{title}\x00{created_at}".encode()).hexdigest()[:16]
        event_id = f"{adapter.source}/{digest}"

    # Nested mapped paths consume the exact dotted key; top-level ones the key.
    consumed_keys = set()
    for name in ("title", "description", "created_at", "resolved_at", "severity", "id"):
        path = adapter.mappings.get(name)
        if path is not None and _lookup_path(raw, path) is not None:
            consumed_keys.add(path)

    features = _flatten_features(raw, consumed_keys)

    return NormalizedEvent(
        id=event_id,
        title=title,
        description=description,
        created_at=created_at,
        resolved_at=resolved_at,
        severity=severity,
        source=adapter.source,
        features=features,
    )


def write_events_jsonl(events: Iterable[NormalizedEvent], fp: TextIO) -> int:
    n = 0
    for ev in events:
        fp.write(json.dumps(ev.to_dict(), sort_keys=True) + "\n")
        n += 1
    return n


def read_events_jsonl(fp: TextIO) -> Iterator[NormalizedEvent]:
    for line in fp:
        line = line.strip()
        if line:
            yield NormalizedEvent.from_dict(json.loads(line))
