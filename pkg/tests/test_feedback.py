import pytest

from sigweave.correlate import AlertGroup, SreRule
from sigweave.embed import ClusterModel
from sigweave.feedback import (
    FeedbackRecord,
    FeedbackStore,
    apply_feedback,
    update_knowledge,
)
from sigweave.mine import MiningConfig, mine_patterns

from conftest import mk_alert

W = 300_000


def make_model():
    corpus = [f"payment latency payment{i}marker" for i in range(8)] + \
             [f"search backlog search{i}marker" for i in range(8)]
    return ClusterModel.train(corpus, k=2)


def mixed_group():
    alerts = {
        "a1": mk_alert("a1", 0, title="payment latency payment0marker",
                       event_type="pay"),
        "a2": mk_alert("a2", 10, title="payment latency payment1marker",
                       event_type="pay"),
        "b1": mk_alert("b1", 20, title="search backlog search0marker",
                       event_type="search"),
    }
    return AlertGroup(list(alerts), alerts), alerts


def test_store_latest_per_author_wins(tmp_path):
    store = FeedbackStore(str(tmp_path / "fb.jsonl"))
    store.record(FeedbackRecord(group_id="g1", verdict="down", author="sre1", ts=1))
    store.record(FeedbackRecord(group_id="g1", verdict="up", author="sre1", ts=2))
    store.record(FeedbackRecord(group_id="g1", verdict="down", author="sre2", ts=3))
    latest = store.latest()
    verdicts = {(fb.group_id, fb.author): fb.verdict for fb in latest}
    assert verdicts == {("g1", "sre1"): "up", ("g1", "sre2"): "down"}


def test_store_rejects_unknown_group(tmp_path):
    from sigweave.errors import UnknownGroup
    store = FeedbackStore(str(tmp_path / "fb.jsonl"))
    with pytest.raises(UnknownGroup):
        store.record(FeedbackRecord(group_id="nope", verdict="down", author="a", ts=0),
                     known_groups=["g1"])


def test_down_vote_splits_by_cluster():
    group, _ = mixed_group()
    votes = [FeedbackRecord(group_id="g1", verdict="down", author="sre", ts=0)]
    refined, ops = apply_feedback([("g1", group)], votes, make_model(), window_ms=W)
    assert sorted(tuple(g.members) for g in refined) == [("a1", "a2"), ("b1",)]
    assert [op.kind for op in ops] == ["split"]


def test_down_vote_with_explicit_flags():
    group, _ = mixed_group()
    votes = [FeedbackRecord(group_id="g1", verdict="down", author="sre", ts=0,
                            flags={"b1": False})]
    refined, ops = apply_feedback([("g1", group)], votes, make_model(), window_ms=W)
    assert sorted(tuple(g.members) for g in refined) == [("a1", "a2"), ("b1",)]


def test_up_vote_pins_group():
    group, _ = mixed_group()
    votes = [FeedbackRecord(group_id="g1", verdict="up", author="sre", ts=0)]
    refined, ops = apply_feedback([("g1", group)], votes, make_model(), window_ms=W)
    assert ops == []
    assert refined[0].members == ["a1", "a2", "b1"]
    assert refined[0].pinned


def test_no_feedback_is_identity():
    group, alerts = mixed_group()
    other = AlertGroup(["c1"], {"c1": mk_alert("c1", 5, title="payment latency payment2marker")})
    refined, ops = apply_feedback([("g1", group), ("g2", other)], [],
                                  make_model(), window_ms=W)
    assert ops == []
    assert sorted(tuple(g.members) for g in refined) == [("a1", "a2", "b1"), ("c1",)]


def test_second_pass_is_noop():
    group, _ = mixed_group()
    model = make_model()
    votes = [FeedbackRecord(group_id="g1", verdict="down", author="sre", ts=0)]
    refined, ops = apply_feedback([("g1", group)], votes, model, window_ms=W)
    assert ops
    pairs = [(g.key, g) for g in refined]
    again, ops2 = apply_feedback(pairs, [], model, window_ms=W)
    assert ops2 == []
    assert [g.members for g in again] == [g.members for g in refined]


def test_split_output_reattaches_to_matching_neighbor():
    group, alerts = mixed_group()
    # a concurrent pure-search group the split-off b1 should join;
    # all groups share one alert index, as in the pipeline
    alerts["b2"] = mk_alert("b2", 30, title="search backlog search1marker",
                            event_type="search")
    other = AlertGroup(["b2"], alerts)
    votes = [FeedbackRecord(group_id="g1", verdict="down", author="sre", ts=0)]
    refined, ops = apply_feedback([("g1", group), ("g2", other)], votes,
                                  make_model(), window_ms=W)
    assert sorted(tuple(g.members) for g in refined) == [("a1", "a2"), ("b1", "b2")]
    assert {op.kind for op in ops} == {"split", "merge"}


def test_update_knowledge_emits_forbids_and_demotions():
    group, alerts = mixed_group()
    model = make_model()
    votes = [FeedbackRecord(group_id="g1", verdict="down", author="sre", ts=0)]
    refined, ops = apply_feedback([("g1", group)], votes, model, window_ms=W)
    patterns = mine_patterns(
        [("pay", "s", 0), ("search", "s", 10),
         ("pay", "s", 2 * W), ("search", "s", 2 * W + 10)],
        MiningConfig(window_ms=W, min_sup=0.5))
    before = {"g1": group}
    after = {g.key: g for g in refined}
    rules, patterns2 = update_knowledge(ops, before, after, [], patterns)
    forbids = [r for r in rules if r.action == "forbid_group"]
    assert forbids, "split should persist forbid rules"
    # the itemset linking the split types is demoted
    active = {f.items for f in patterns2.active_itemsets()}
    assert frozenset({"pay", "search"}) not in active
