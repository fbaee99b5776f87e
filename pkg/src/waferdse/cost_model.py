"""Analytical operator cost model: tiled EMA per dataflow, roofline latency,
the alpha-beta collective model and the offline performance lookup table.

Tiled GEMM ``C[M,N] = A[M,K] @ B[K,N]`` with tile counts nM, nK, nN and a
single on-chip buffer per tensor. A tile is fetched whenever the tile needed
next differs from the resident one; partial sums of C are written back on
eviction and read again on the next touch.

    OS  for i, for j, for k      C resident across k
    WS  for k, for j, for i      B tile resident, A streams, C partials spill
    IS  for k, for i, for j      A tile resident, B streams, C partials spill

Closed forms (elements; ``>1`` guards capture tiles that stay resident):

    OS  A * (nN if nK > 1 else 1) + B * (nM if nK*nN > 1 else 1) + C
    WS  A * (nN if nM > 1 else 1) + B + C * (2*nK - 1 if nM*nN > 1 else 1)
    IS  A + B * (nM if nN > 1 else 1) + C * (2*nK - 1 if nM*nN > 1 else 1)
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from .hw_model import DieSpec
from .workload import ACT_BYTES, ELEMENTWISE_KINDS, FLASH, GEMM_KINDS, OperatorNode

DEFAULT_UTILIZATION = 0.5


class DataflowKind(str, enum.Enum):
    OS = "OutputStationary"
    WS = "WeightStationary"
    IS = "InputStationary"
    RS = "RowStationary"


TIE_ORDER = (DataflowKind.OS, DataflowKind.WS, DataflowKind.IS)
CONV_KINDS = frozenset({"Conv"})


def admissible_dataflows(kind: str) -> tuple[DataflowKind, ...]:
    if kind in CONV_KINDS:
        return TIE_ORDER + (DataflowKind.RS,)
    if kind in GEMM_KINDS:
        return TIE_ORDER
    return (DataflowKind.OS,)


@dataclass(frozen=True)
class OpCost:
    latency: float
    ema_bytes: float
    dataflow: DataflowKind
    flops: float = 0.0


def choose_tiles(m: int, k: int, n: int, array: tuple[int, int], sram_bytes: int,
                 elem_bytes: int = ACT_BYTES) -> tuple[int, int, int]:
    """SRAM-constrained tile sizes; the whole problem when it fits."""
    if elem_bytes * (m * k + k * n + m * n) <= sram_bytes:
        return m, k, n
    side = 1
    while 3 * (2 * side) ** 2 * elem_bytes <= sram_bytes:
        side *= 2
    rows, cols = array
    tm, tk, tn = min(m, side), min(k, side), min(n, side)
    if rows <= tm < m:
        tm -= tm % rows
    if cols <= tn < n:
        tn -= tn % cols
    return tm, tk, tn


def ema_for_tiles(m: int, k: int, n: int, tiles: tuple[int, int, int],
                  dataflow: DataflowKind, elem_bytes: int = ACT_BYTES) -> int:
    tm, tk, tn = tiles
    nm, nk, nn = math.ceil(m / tm), math.ceil(k / tk), math.ceil(n / tn)
    a, b, c = m * k, k * n, m * n
    spill = 2 * nk - 1 if nm * nn > 1 else 1
    if dataflow is DataflowKind.OS:
        elems = a * (nn if nk > 1 else 1) + b * (nm if nk * nn > 1 else 1) + c
    elif dataflow is DataflowKind.WS:
        elems = a * (nn if nm > 1 else 1) + b + c * spill
    elif dataflow is DataflowKind.IS:
        elems = a + b * (nm if nn > 1 else 1) + c * spill
    else:
        raise ValueError(f"{dataflow.value} applies to convolutions only")
    return elems * elem_bytes


def ema_for_dataflow(m: int, k: int, n: int, dataflow: DataflowKind,
                     array: tuple[int, int], sram_bytes: int,
                     elem_bytes: int = ACT_BYTES) -> int:
    """DRAM traffic in bytes of an ``m x k x n`` GEMM under ``dataflow``."""
    if min(m, k, n) <= 0:
        raise ValueError("GEMM dimensions must be positive")
    tiles = choose_tiles(m, k, n, array, sram_bytes, elem_bytes)
    return ema_for_tiles(m, k, n, tiles, dataflow, elem_bytes)


def _die_array(die: DieSpec) -> tuple[int, int]:
    return die.core_rows, die.core_cols


def _op_ema(op: OperatorNode, die: DieSpec, dataflow: DataflowKind) -> float:
    if op.kind in GEMM_KINDS:
        m, k, n = op.shape
        if min(m, k, n) == 0:
            return 0.0
        return float(ema_for_dataflow(m, k, n, dataflow, _die_array(die), die.sram_bytes))
    if op.kind in ELEMENTWISE_KINDS:
        return 2.0 * op.shape[0] * ACT_BYTES
    if op.kind == FLASH:
        # (B, heads, S, dh) or, after a sequence split, (B, heads, S_q, S_kv, dh)
        if len(op.shape) == 4:
            b, heads, sq, dh = op.shape
            skv = sq
        else:
            b, heads, sq, skv, dh = op.shape
        q_bytes = b * heads * sq * dh * ACT_BYTES
        kv_bytes = 2 * b * heads * skv * dh * ACT_BYTES
        kv_head = 2 * skv * dh * ACT_BYTES
        passes = max(1, math.ceil(kv_head / max(1, die.sram_bytes // 2)))
        return float(2 * q_bytes + passes * kv_bytes)
    raise ValueError(f"unknown operator kind {op.kind!r}")


def op_latency(op: OperatorNode, die: DieSpec, dram_bandwidth: float,
               utilization: float = DEFAULT_UTILIZATION, direction: str = "fwd",
               dataflow: DataflowKind | None = None) -> OpCost:
    """Roofline latency: max(compute-bound time, DRAM-bound time).

    Backward costs twice the forward EMA (two GEMMs per forward GEMM).
    """
    if dataflow is None:
        dataflow = select_dataflow(op, die, dram_bandwidth, utilization)
    flops = op.fwd_flops if direction == "fwd" else op.bwd_flops
    ema = _op_ema(op, die, dataflow)
    if direction != "fwd":
        ema *= 2.0
    compute = flops / (die.compute_flops * utilization)
    memory = ema / dram_bandwidth
    return OpCost(max(compute, memory), ema, dataflow, flops)


def select_dataflow(op: OperatorNode, die: DieSpec, dram_bandwidth: float | None = None,
                    utilization: float = DEFAULT_UTILIZATION) -> DataflowKind:
    """Argmin-latency dataflow; ties resolve OS < WS < IS.

    Without a bandwidth the choice minimises EMA, which is the latency
    argmin whenever the operator is memory bound.
    """
    best, best_key = None, None
    for df in admissible_dataflows(op.kind):
        if dram_bandwidth is None:
            key = _op_ema(op, die, df)
        else:
            key = op_latency(op, die, dram_bandwidth, utilization, dataflow=df).latency
        if best_key is None or key < best_key:
            best, best_key = df, key
    return best


def allreduce_time(tp: int, bsh_bytes: float, bw: float, alpha: float) -> float:
    """alpha + 2 (tp-1)/tp * bytes / bw; zero for a single die."""
    if tp < 1:
        raise ValueError("tp must be >= 1")
    if tp == 1:
        return 0.0
    return alpha + (2.0 * (tp - 1) / tp * bsh_bytes) / bw


def allgather_time(group: int, total_bytes: float, bw: float, alpha: float) -> float:
    if group <= 1:
        return 0.0
    return alpha + ((group - 1) / group * total_bytes) / bw


# -- performance lookup table -------------------------------------------------

class PerfTableMiss(KeyError):
    pass


def hw_key(die: DieSpec, dram_bandwidth: float, utilization: float = DEFAULT_UTILIZATION) -> str:
    return (f"{die.name or 'die'}|{die.compute_flops:.6e}|{die.sram_bytes}|"
            f"{die.core_rows}x{die.core_cols}|bw={dram_bandwidth:.6e}|u={utilization:g}")


def _key(op: OperatorNode, hw: str, direction: str) -> tuple:
    return (op.kind, tuple(op.shape), hw, direction)


class PerfTable:
    """Read-only mapping ``(kind, shape, hw, direction) -> OpCost``."""

    def __init__(self, entries: Mapping[tuple, OpCost] | None = None):
        self._entries = dict(entries or {})

    def __len__(self):
        return len(self._entries)

    def __contains__(self, key):
        return key in self._entries

    def lookup(self, op: OperatorNode, hw: str, direction: str = "fwd") -> OpCost:
        key = _key(op, hw, direction)
        try:
            cost = self._entries[key]
        except KeyError:
            raise PerfTableMiss(f"perf table has no entry for {key}") from None
        return cost

    def to_json(self) -> str:
        rows = [{"kind": k[0], "shape": list(k[1]), "hw": k[2], "dir": k[3],
                 "latency": c.latency, "ema": c.ema_bytes, "dataflow": c.dataflow.name,
                 "flops": c.flops}
                for k, c in sorted(self._entries.items(), key=lambda kv: repr(kv[0]))]
        return json.dumps(rows, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PerfTable":
        entries = {}
        for r in json.loads(text):
            key = (r["kind"], tuple(r["shape"]), r["hw"], r["dir"])
            entries[key] = OpCost(r["latency"], r["ema"], DataflowKind[r["dataflow"]], r["flops"])
        return cls(entries)


def build_perf_table(ops: Iterable[OperatorNode],
                     hardware: Iterable[tuple[DieSpec, float]],
                     utilization: float = DEFAULT_UTILIZATION) -> PerfTable:
    """Tabulate fwd/bwd costs for every operator shape on every (die, DRAM bw)."""
    ops = list(ops)
    entries = {}
    for die, bw in hardware:
        hw = hw_key(die, bw, utilization)
        for op in ops:
            for direction in ("fwd", "bwd"):
                key = _key(op, hw, direction)
                if key not in entries:
                    entries[key] = op_latency(op, die, bw, utilization, direction)
    return PerfTable(entries)


def content_hash(payload) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
