import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from collabcache.errors import InvalidContent, InvalidStation
from collabcache.instance import INFINITE
from collabcache.online import (
    TRACE_HEADER,
    CostLedger,
    DecisionKind,
    credit,
    credit_lower_envelope,
    init_state,
    probe_invariants,
    process_request,
    replay_ledger,
    run_stream,
    write_trace_csv,
)
from collabcache.workload import RequestStream

from helpers import hand_trace_instance, line_instance, random_instance, random_stream


def test_init_state():
    inst = line_instance(np.zeros((3, 4)), np.ones((3, 2)))
    s = init_state(inst, 1)
    assert s.open_caches == {3}
    assert s.potentials.shape == (4,) and not s.potentials.any()
    assert not s.request_counts.any()


def test_reinit_after_run_matches_fresh():
    inst = hand_trace_instance()
    s = init_state(inst, 0)
    for _ in range(3):
        process_request(s, inst, 0)
    fresh, again = init_state(inst, 0), init_state(inst, 0)
    assert again.open_caches == fresh.open_caches
    assert np.array_equal(again.potentials, fresh.potentials)


def test_hand_trace():
    inst = hand_trace_instance()
    s = init_state(inst, 0)

    d1 = process_request(s, inst, 0)
    assert d1.kind is DecisionKind.FETCH and d1.source == 2 and d1.ua_cost_delta == 5
    assert s.potentials.tolist() == [5.0, 4.0, 0.0]

    d2 = process_request(s, inst, 0)
    assert d2.kind is DecisionKind.FETCH and d2.ua_cost_delta == 5
    assert s.potentials.tolist() == [10.0, 8.0, 0.0]  # p(0) = f(0) does not open

    before = s.copy()
    d3 = process_request(s, inst, 0)
    assert d3.kind is DecisionKind.OPEN_AND_FETCH and d3.opened == 0 and d3.source == 0
    assert d3.caching_cost_delta == 10 and d3.ua_cost_delta == 0
    assert s.potentials.tolist() == [0.0, 0.0, 0.0]
    assert credit(before, inst, 0, d3) == 0.0

    assert s.credits == [5.0, 5.0, 0.0]
    report = probe_invariants(s, inst)
    assert report.ok
    assert s.opened_cost == 10.0 == math.fsum(s.credits)

    d4 = process_request(s, inst, 0)
    assert d4.kind is DecisionKind.LOCAL_HIT and d4.ua_cost_delta == 0 and d4.credit is None
    assert s.processed == 3 and s.local_hits == 1


def test_run_stream_hand_trace_total():
    inst = hand_trace_instance()
    result = run_stream(inst, RequestStream([(0, 0)] * 4))
    assert result.ledger.total() == 20.0
    assert [r.decision.kind for r in result.trace] == [
        DecisionKind.FETCH, DecisionKind.FETCH, DecisionKind.OPEN_AND_FETCH, DecisionKind.LOCAL_HIT]


def test_empty_stream():
    inst = hand_trace_instance()
    result = run_stream(inst, RequestStream(np.zeros((0, 2))))
    assert result.ledger.total() == 0 and result.trace == []
    assert result.states[0].processed == 0


def test_local_hit_leaves_state_untouched():
    inst = hand_trace_instance()
    s = init_state(inst, 0)
    for _ in range(3):
        process_request(s, inst, 0)
    snap = s.copy()
    process_request(s, inst, 0)
    assert np.array_equal(s.potentials, snap.potentials)
    assert np.array_equal(s.request_counts, snap.request_counts)
    assert s.credits == snap.credits and s.update_ops == snap.update_ops


def test_equal_score_does_not_open():
    inst = line_instance([[0, 4]], [8.0])
    s = init_state(inst, 0)
    assert process_request(s, inst, 0).kind is DecisionKind.FETCH
    assert process_request(s, inst, 0).kind is DecisionKind.FETCH  # p = 8 = f
    assert process_request(s, inst, 0).kind is DecisionKind.OPEN_AND_FETCH


def test_ties_break_to_lowest_index():
    # both stations gain equally from a request at station 2, fees equal
    ua = np.array([[0, 2, 1, 50], [2, 0, 1, 50], [1, 1, 0, 50]], dtype=float)
    inst = line_instance(ua, [30.0, 30.0, INFINITE])
    s = init_state(inst, 0)
    d = process_request(s, inst, 2)
    assert d.opened == 0 and d.source == 0


def test_infinite_fee_never_opens():
    inst = line_instance([[0, 100]], [[INFINITE]])
    s = init_state(inst, 0)
    for _ in range(50):
        d = process_request(s, inst, 0)
        assert d.kind is DecisionKind.FETCH and d.source == 1


def test_invalid_station_and_content_carry_event_index():
    inst = hand_trace_instance()
    with pytest.raises(InvalidStation) as err:
        run_stream(inst, RequestStream([(0, 0), (5, 0)]))
    assert err.value.event_index == 1
    with pytest.raises(InvalidContent) as err:
        run_stream(inst, RequestStream([(0, 3)]))
    assert err.value.event_index == 0


def test_interleaving_contents_keeps_traces_independent():
    rng = np.random.default_rng(3)
    inst = random_instance(rng, K=6, M=3)
    stream = random_stream(rng, 6, 3, max_per_content=200)
    joint = run_stream(inst, stream)
    for j in range(3):
        alone = run_stream(inst, RequestStream(stream.for_content(j)))
        a = [r.decision for r in joint.trace if r.content == j]
        b = [r.decision for r in alone.trace]
        assert a == b


def test_ledger_equals_trace_replay(tmp_path):
    rng = np.random.default_rng(9)
    inst = random_instance(rng, K=8, M=4)
    result = run_stream(inst, random_stream(rng, 8, 4))
    replayed = replay_ledger(result.trace, inst.content_sizes)
    assert replayed.total() == result.ledger.total()
    assert np.array_equal(replayed.per_content_ua, result.ledger.per_content_ua)
    path = tmp_path / "trace.csv"
    write_trace_csv(result.trace, path)
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == TRACE_HEADER and len(lines) == len(result.trace) + 1


def test_ledger_merge_is_order_independent():
    sizes = np.array([2.0, 3.0])
    a = CostLedger(sizes, np.array([1.0, 0.0]), np.array([4.0, 0.0]))
    b = CostLedger(sizes, np.array([0.0, 2.0]), np.array([0.0, 1.0]))
    assert CostLedger.merge(sizes, [a, b]).total() == CostLedger.merge(sizes, [b, a]).total() == 19.0


def test_operation_counters():
    rng = np.random.default_rng(11)
    inst = random_instance(rng, K=9, M=2)
    result = run_stream(inst, random_stream(rng, 9, 2))
    for s in result.states.values():
        assert s.update_ops == (inst.num_stations + 1) * s.processed
        assert s.recomputations == len(s.open_caches) - 1 <= inst.num_stations


def _check_every_step(inst, stations):
    s = init_state(inst, 0)
    for i in stations:
        before = s.copy()
        d = process_request(s, inst, i)
        if d.kind is not DecisionKind.LOCAL_HIT:
            c = credit(before, inst, i, d)
            assert c == d.credit
            env = credit_lower_envelope(before, inst, i)
            assert abs(c - env) <= 1e-9 * max(1.0, abs(env))
        report = probe_invariants(s, inst)
        assert report.ok, report.violations
    return s


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**31 - 1),
    K=st.integers(1, 10),
    n=st.integers(1, 120),
    fee_scale=st.floats(0.05, 10),
)
def test_invariants_hold_after_every_request(seed, K, n, fee_scale):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, K=K, M=1, fee_scale=fee_scale, infinite_fraction=0.2)
    _check_every_step(inst, rng.integers(0, K, size=n).tolist())


@settings(max_examples=40, deadline=None)
@given(
    ua_seed=st.integers(0, 2**31 - 1),
    stations=st.lists(st.integers(0, 4), min_size=1, max_size=60),
)
def test_invariants_on_arbitrary_metric(ua_seed, stations):
    """Random points on a line give a metric with many exact ties."""
    rng = np.random.default_rng(ua_seed)
    pts = rng.integers(0, 6, size=5).astype(float)
    ua = np.abs(pts[:, None] - pts[None, :])
    ua = np.hstack([ua, np.full((5, 1), 7.0)])
    fees = rng.integers(1, 15, size=5).astype(float)
    _check_every_step(line_instance(ua, fees), stations)


def test_single_request_ratio_at_most_two():
    # one request: either Internet fetch (cost T) or open at once when f < T
    for f, T in [(3.0, 5.0), (10.0, 5.0), (5.0, 5.0), (0.5, 100.0)]:
        inst = line_instance([[0, T]], [f])
        online = run_stream(inst, RequestStream([(0, 0)])).ledger.total()
        assert online <= 2 * min(f, T)
