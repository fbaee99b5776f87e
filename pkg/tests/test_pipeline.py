import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import one_f_one_b_events

from waferdse.pipeline import (ENDING_BWD, STEADY_BWD, STEADY_FWD, WARMUP_FWD, ScheduleError,
                               StageTiming, peak_live_microbatches, schedule_1f1b,
                               stage_memory_peak)
from waferdse.workload import (ModelConfig, TrainingWorkload, boundary_bytes,
                               checkpoint_bytes_per_stage,
                               layers_per_stage, model_state_bytes)

U = StageTiming(1.0, 1.0)


def phases(tl, s):
    return [e.phase for e in tl.stage_events(s)]


def test_three_by_five_example():
    tl = schedule_1f1b(3, 5, U)
    ph = phases(tl, 0)
    assert ph.count(WARMUP_FWD) == 3
    assert ph.count(STEADY_FWD) == 2 and ph.count(STEADY_BWD) == 2
    assert ph.count(ENDING_BWD) == 3
    assert tl.peak_live[0] == 3


def test_single_stage_has_no_bubble():
    tl = schedule_1f1b(1, 4, StageTiming(2.0, 3.0))
    assert tl.iteration_time == 4 * 5.0


def test_two_by_two_uniform():
    assert schedule_1f1b(2, 2, U).iteration_time == 6.0


def test_n_below_p_rejected():
    with pytest.raises(ScheduleError):
        schedule_1f1b(4, 3, U)


def test_peak_live_examples():
    assert peak_live_microbatches(3, 0) == 3
    assert peak_live_microbatches(5, 4) == 1
    assert peak_live_microbatches(8, 3) == 5
    with pytest.raises(ValueError):
        peak_live_microbatches(3, 3)


def test_negative_timing_rejected():
    with pytest.raises(ValueError):
        StageTiming(-1.0, 1.0)


def test_chrome_trace_shape():
    tl = schedule_1f1b(2, 3, U)
    doc = json.loads(tl.to_chrome_trace())
    assert len(doc["traceEvents"]) == 2 * 2 * 3
    assert {e["ph"] for e in doc["traceEvents"]} == {"X"}


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 6).flatmap(lambda p: st.tuples(
    st.just(p), st.integers(p, 12),
    st.lists(st.integers(1, 5), min_size=p, max_size=p),
    st.lists(st.integers(1, 9), min_size=p, max_size=p),
    st.lists(st.integers(0, 3), min_size=p, max_size=p),
    st.lists(st.integers(0, 2), min_size=max(p - 1, 0), max_size=max(p - 1, 0)))))
def test_matches_event_oracle_nonuniform(case):
    p, n, f, b, r, tr = case
    tl = schedule_1f1b(p, n, [StageTiming(f[s], b[s], r[s]) for s in range(p)], tr)
    ref, log = one_f_one_b_events(p, n, f, b, r, tr)
    assert tl.iteration_time == ref
    for s in range(p):
        ours = [(("F" if e.is_forward else "B"), e.microbatch, e.start, e.end)
                for e in tl.stage_events(s)]
        assert ours == log[s]


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6).flatmap(lambda p: st.tuples(st.just(p), st.integers(p, 12))),
       st.lists(st.integers(0, 3), min_size=5, max_size=5))
def test_dependency_soundness_and_counts(pn, tr):
    p, n = pn
    tr = tr[:p - 1]
    tl = schedule_1f1b(p, n, [StageTiming(1 + s % 2, 2.0, 0.5) for s in range(p)], tr)
    f_end, b_end = {}, {}
    for s in range(p):
        evs = tl.stage_events(s)
        assert sum(e.is_forward for e in evs) == n
        assert sum(not e.is_forward for e in evs) == n
        for a, c in zip(evs, evs[1:]):
            assert c.start >= a.end
        for e in evs:
            (f_end if e.is_forward else b_end)[(s, e.microbatch)] = e
    for (s, b), e in f_end.items():
        if s > 0:
            assert e.start >= f_end[(s - 1, b)].end + tr[s - 1]
    for (s, b), e in b_end.items():
        if s < p - 1:
            assert e.start >= b_end[(s + 1, b)].end + tr[s]
        else:
            assert e.start >= f_end[(s, b)].end


def test_uniform_closed_form_small_grid():
    for p in range(1, 7):
        for n in range(p, 13):
            tl = schedule_1f1b(p, n, U)
            assert tl.iteration_time == (n + p - 1) * 2.0
            assert tl.iteration_time == one_f_one_b_events(p, n, [1.0] * p, [1.0] * p)[0]
            assert tl.peak_live == tuple(p - s for s in range(p))


def replay_peak(tl, s, per_mb, fixed):
    """High-water mark from replaying a stage's events."""
    live = high = 0
    for e in tl.stage_events(s):
        live += 1 if e.is_forward else -1
        high = max(high, live)
    return fixed + high * per_mb


@pytest.mark.parametrize("stored", [set(), {"qkv", "attn", "mlp_down"}, None])
def test_memory_peak_matches_replay(model, stored):
    wl = TrainingWorkload(model, 2, 6)
    p, tp = 3, 2
    names = {op.name for op in wl.graph} if stored is None else stored
    tl = schedule_1f1b(p, wl.num_microbatches, U)
    layers = layers_per_stage(model.num_layers, p)
    for s in range(p):
        per_mb = checkpoint_bytes_per_stage(wl.graph, layers[s], tp, 1, names) + \
            boundary_bytes(model, 2, tp)
        expect = replay_peak(tl, s, per_mb, model_state_bytes(model, tp, p))
        assert stage_memory_peak(s, wl, names, tp, p) == expect


def test_store_everything_ratio():
    wl = TrainingWorkload(ModelConfig("even", 3, 256, 4, 128, 1000), 1, 3)
    names = {op.name for op in wl.graph}
    ck = [stage_memory_peak(s, wl, names, 1, 3) - stage_memory_peak(s, wl, set(), 1, 3)
          for s in range(3)]
    assert ck[0] == 3 * ck[2]
