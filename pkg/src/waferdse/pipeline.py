"""1F1B pipeline schedule simulation and per-stage memory peaks.

Stages are 0-based. Stage ``s`` runs ``p - s`` warmup forwards, then
``n - p + s`` (backward, forward) pairs, then ``p - s`` ending backwards.
Recompute time is charged at the start of each backward on the same stage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Collection, Sequence

from .workload import (TrainingWorkload, boundary_bytes, checkpoint_bytes_per_stage,
                       layers_per_stage, model_state_bytes)

WARMUP_FWD = "warmup-fwd"
STEADY_FWD = "steady-fwd"
STEADY_BWD = "steady-bwd"
ENDING_BWD = "ending-bwd"


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class StageTiming:
    fwd_time: float
    bwd_time: float
    recompute_time: float = 0.0

    def __post_init__(self):
        if min(self.fwd_time, self.bwd_time, self.recompute_time) < 0:
            raise ValueError("stage timings must be non-negative")

    @property
    def steady_time(self) -> float:
        return self.fwd_time + self.bwd_time + self.recompute_time


@dataclass(frozen=True)
class Event:
    stage: int
    microbatch: int
    phase: str
    start: float
    end: float

    @property
    def is_forward(self) -> bool:
        return self.phase.endswith("fwd")


@dataclass(frozen=True)
class PipelineTimeline:
    events: tuple[tuple[Event, ...], ...]
    iteration_time: float
    peak_live: tuple[int, ...]

    def stage_events(self, s: int) -> tuple[Event, ...]:
        return self.events[s]

    def to_chrome_trace(self, time_unit: float = 1e-6) -> str:
        """Chrome ``about:tracing`` JSON; timestamps in microseconds by default."""
        trace = []
        for stage_events in self.events:
            for ev in stage_events:
                trace.append({
                    "name": f"{'F' if ev.is_forward else 'B'}{ev.microbatch}",
                    "cat": ev.phase, "ph": "X", "pid": 0, "tid": ev.stage,
                    "ts": ev.start / time_unit, "dur": (ev.end - ev.start) / time_unit,
                })
        return json.dumps({"traceEvents": trace, "displayTimeUnit": "ms"}, sort_keys=True)


def stage_order(p: int, n: int, s: int) -> list[tuple[str, int, str]]:
    """Per-stage op sequence as ``(F|B, microbatch, phase)``."""
    warm = p - s
    order = [("F", b, WARMUP_FWD) for b in range(warm)]
    for j in range(n - p + s):
        order.append(("B", j, STEADY_BWD))
        order.append(("F", warm + j, STEADY_FWD))
    order.extend(("B", b, ENDING_BWD) for b in range(n - warm, n))
    return order


def peak_live_microbatches(p: int, s: int) -> int:
    if not 0 <= s < p:
        raise ValueError(f"stage {s} out of range for {p} stages")
    return p - s


def _as_list(value, length, name):
    if isinstance(value, (int, float, StageTiming)):
        return [value] * length
    value = list(value)
    if len(value) != length:
        raise ValueError(f"{name}: expected {length} entries, got {len(value)}")
    return value


def schedule_1f1b(p: int, n: int, timings: Sequence[StageTiming] | StageTiming,
                  transfer: Sequence[float] | float = 0.0) -> PipelineTimeline:
    if p < 1:
        raise ScheduleError("need at least one stage")
    if n < p:
        raise ScheduleError(f"1F1B needs n >= p (n={n}, p={p})")
    timings = _as_list(timings, p, "timings")
    transfer = _as_list(transfer, max(p - 1, 0), "transfer")

    orders = [stage_order(p, n, s) for s in range(p)]
    f_end = [[None] * n for _ in range(p)]
    b_end = [[None] * n for _ in range(p)]
    events: list[list[Event]] = [[] for _ in range(p)]
    cursor = [0] * p
    free_at = [0.0] * p
    remaining = sum(len(o) for o in orders)

    while remaining:
        progressed = False
        for s in range(p):
            while cursor[s] < len(orders[s]):
                kind, b, phase = orders[s][cursor[s]]
                if kind == "F":
                    if s == 0:
                        ready = 0.0
                    elif f_end[s - 1][b] is None:
                        break
                    else:
                        ready = f_end[s - 1][b] + transfer[s - 1]
                    dur = timings[s].fwd_time
                else:
                    if s == p - 1:
                        ready = f_end[s][b]
                    elif b_end[s + 1][b] is None:
                        break
                    else:
                        ready = b_end[s + 1][b] + transfer[s]
                    dur = timings[s].recompute_time + timings[s].bwd_time
                start = max(free_at[s], ready)
                end = start + dur
                (f_end if kind == "F" else b_end)[s][b] = end
                free_at[s] = end
                events[s].append(Event(s, b, phase, start, end))
                cursor[s] += 1
                remaining -= 1
                progressed = True
        if not progressed:
            raise ScheduleError("schedule deadlocked")  # unreachable for valid 1F1B orders

    peak = []
    for s in range(p):
        live = high = 0
        for ev in events[s]:
            live += 1 if ev.is_forward else -1
            high = max(high, live)
        peak.append(high)
    iteration = max(ev.end for stage_events in events for ev in stage_events)
    return PipelineTimeline(tuple(tuple(e) for e in events), iteration, tuple(peak))


def stage_memory_peak(stage: int, workload: TrainingWorkload, stored_ops: Collection[str],
                      tp: int, p: int) -> int:
    """Per-die peak bytes of ``stage``: model state, stage-input buffers and
    the checkpoints of operators kept in memory."""
    live = peak_live_microbatches(p, stage)
    layers = layers_per_stage(workload.model.num_layers, p)[stage]
    ckpt = checkpoint_bytes_per_stage(workload.graph, layers, tp, live, set(stored_ops))
    boundary = boundary_bytes(workload.model, workload.microbatch_size, tp) * live
    return model_state_bytes(workload.model, tp, p) + boundary + ckpt
