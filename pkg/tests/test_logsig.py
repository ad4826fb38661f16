import io
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sigweave.logsig import (
    LogLine,
    LogStore,
    TemplateModel,
    build_signature,
    classify_line,
    mask_variables,
    merge_signatures,
    signature_from_json,
    signature_similarity,
    signature_to_json,
)
from sigweave.model import NormalizedEvent, Severity


def line(msg, ts=0, app="app-1"):
    return LogLine(ts=ts, application_id=app, message=msg)


def test_classify_error_signals():
    assert classify_line(line("ERROR connection refused by 10.0.0.1")) == "error"
    assert classify_line(line("request timed out after 30s")) == "error"
    assert classify_line(line('  File "handler.py", line 3')) == "error"
    assert classify_line(line("GET /health 200 in 4ms")) == "non_error"


def test_mask_variables():
    masked = mask_variables(
        "user 550e8400-e29b-41d4-a716-446655440000 from 10.1.2.3:8080 "
        "read /var/log/app.log in 42 ms")
    assert "10.1.2.3" not in masked and "42" not in masked
    assert "/var/log/app.log" not in masked
    assert masked.count("<*>") == 4


def test_template_model_collapses_variants():
    model = TemplateModel()
    a = model.mine(line("ERROR request 17 refused"))
    b = model.mine(line("ERROR request 93 refused"))
    c = model.mine(line("ERROR disk unreachable on /dev/sda1"))
    assert a == b
    assert c != a
    assert "<*>" in model.template_string(a)


def test_template_model_round_trip():
    model = TemplateModel()
    for i in range(20):
        model.mine(line(f"ERROR request {i} refused"))
        model.mine(line(f"WARN slow reply {i} ms"))
    again = TemplateModel.from_dict(model.to_dict())
    assert again.to_dict() == model.to_dict()
    # restored model keeps assigning the same templates
    assert again.mine(line("ERROR request 999 refused")) == model.mine(
        line("ERROR request 999 refused"))


def test_log_store_window_and_jsonl():
    lines = [line("ERROR boom", ts=t) for t in (0, 100, 500, 900)]
    store = LogStore(lines)
    assert [l.ts for l in store.window(100, 899)] == [100, 500]
    assert [l.ts for l in store.window(100, 900)] == [100, 500, 900]
    buf = io.StringIO()
    for l in lines:
        buf.write(json.dumps({"ts": l.ts, "application_id": l.application_id,
                              "message": l.message}) + "\n")
    buf.seek(0)
    assert [l.ts for l in LogStore.load_jsonl(buf).window(0, 1000)] == [0, 100, 500, 900]


def mk_event(ts=1000):
    return NormalizedEvent(id="s/1", title="t", description="", created_at=ts,
                           severity=Severity.ERROR, source="s")


def test_build_signature_window_and_app_filter():
    store = LogStore([
        line("ERROR payment handler failed", ts=900, app="app-1"),
        line("ERROR search shard crashed", ts=950, app="app-2"),
        line("ERROR payment handler failed", ts=99_999_999, app="app-1"),  # outside
        line("all good", ts=960, app="app-1"),  # non-error: ignored
    ])
    model = TemplateModel()
    sig_all = build_signature(mk_event(), store, model, window_ms=600_000)
    assert set(sig_all) == {"app-1", "app-2"}
    sig_one = build_signature(mk_event(), store, model, window_ms=600_000,
                              application_ids=["app-1"])
    assert set(sig_one) == {"app-1"}
    assert sig_one["app-1"] == sig_all["app-1"]


def test_similarity_per_app_jaccard():
    a = {"app-1": {1, 2}, "app-2": {3}}
    b = {"app-1": {2}, "app-2": {3}}
    # mean of 1/2 and 1/1
    assert signature_similarity(a, b) == pytest.approx(0.75)
    # apps missing on one side average in a zero
    c = {"app-1": {2}, "app-3": {9}}
    assert signature_similarity(a, c) == pytest.approx((0.5 + 0 + 0) / 3)


def test_merge_and_json_round_trip():
    merged = merge_signatures([{"a": {1}}, {"a": {2}, "b": {3}}])
    assert merged == {"a": {1, 2}, "b": {3}}
    assert signature_from_json(signature_to_json(merged)) == merged
    assert signature_to_json(None) is None


signatures = st.dictionaries(
    st.sampled_from([f"app-{i}" for i in range(6)]),
    st.sets(st.integers(min_value=0, max_value=40), min_size=1, max_size=8),
    max_size=4,
)


@settings(max_examples=300, deadline=None)
@given(signatures, signatures)
def test_similarity_symmetric_and_bounded(a, b):
    s = signature_similarity(a, b)
    assert 0.0 <= s <= 1.0
    assert s == signature_similarity(b, a)


@settings(max_examples=300, deadline=None)
@given(signatures)
def test_similarity_identity_and_empty(a):
    if a:
        assert signature_similarity(a, a) == pytest.approx(1.0)
    assert signature_similarity(a, {}) == 0.0
    assert signature_similarity({}, {}) == 0.0
