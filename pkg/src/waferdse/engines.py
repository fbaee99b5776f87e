"""TP/PP execution engines and the iteration evaluator.

A stage is a rectangle of ``tp`` dies. Its operators are sharded by a
``TpSplit`` over the B, S, H and K dimensions; collectives run on a
bidirectional ring embedded in the rectangle. Inter-stage traffic (pipeline
activations and checkpoint offload) is routed center to center and assigned
to links largest task first, with a punishment on already-occupied links.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .cost_model import (DEFAULT_UTILIZATION, PerfTable, allgather_time, allreduce_time, hw_key,
                         op_latency)
from .dram_alloc import AllocationSet, EMPTY
from .gcmr import RecompConfig, RecompItem
from .hw_model import WaferConfig
from .pipeline import PipelineTimeline, StageTiming, peak_live_microbatches, schedule_1f1b, stage_memory_peak
from .placement import Coord, PlacementMap, manhattan, min_cost_monotone_path
from .workload import (ACT_BYTES, ELEMENTWISE_KINDS, FLASH, GEMM_KINDS, OperatorNode,
                       TrainingWorkload, boundary_bytes, layers_per_stage, shard_bytes)

DEFAULT_PUNISHMENT = 4.0
DIMS = ("B", "S", "H", "K")


class CapacityError(RuntimeError):
    """A die's resident bytes exceed its DRAM capacity."""

    def __init__(self, stage: int, resident: int, capacity: int):
        self.stage, self.resident, self.capacity = stage, resident, capacity
        super().__init__(f"stage {stage} needs {resident} bytes per die but capacity is {capacity}")


# -- tensor-parallel splits --------------------------------------------------

@dataclass(frozen=True)
class TpSplit:
    shape: tuple[int, int]                  # (rows, cols) of dies
    factors: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        rows, cols = self.shape
        if rows < 1 or cols < 1:
            raise ValueError(f"invalid TP shape {self.shape}")
        prod = 1
        for dim, f in self.factors:
            if dim not in DIMS or f < 1:
                raise ValueError(f"invalid partition factor {dim}:{f}")
            prod *= f
        if prod != rows * cols:
            raise ValueError(f"factors {self.factors} do not multiply to tp={rows * cols}")

    @property
    def tp(self) -> int:
        return self.shape[0] * self.shape[1]

    def factor(self, dim: str) -> int:
        return dict(self.factors).get(dim, 1)

    @property
    def label(self) -> str:
        f = ",".join(f"{d}{n}" for d, n in self.factors) or "none"
        return f"{self.shape[0]}x{self.shape[1]}[{f}]"

    def to_dict(self) -> dict:
        return {"shape": list(self.shape), "factors": {d: n for d, n in self.factors}, "label": self.label}


def _factors(**kw) -> tuple[tuple[str, int], ...]:
    return tuple((d, kw[d]) for d in DIMS if kw.get(d, 1) > 1)


def partition_options(tp: int, microbatch: int) -> list[tuple[tuple[str, int], ...]]:
    if tp == 1:
        return [()]
    opts = [_factors(H=tp), _factors(K=tp), _factors(S=tp)]
    if tp % 2 == 0 and tp >= 4:
        opts += [_factors(S=2, H=tp // 2), _factors(H=tp // 2, K=2)]
    if microbatch >= tp:
        opts.append(_factors(B=tp))
    out = []
    for o in opts:
        if o not in out:
            out.append(o)
    return out


def region_shapes(tp: int, grid_x: int, grid_y: int) -> list[tuple[int, int]]:
    return [(r, tp // r) for r in range(1, tp + 1)
            if tp % r == 0 and r <= grid_y and tp // r <= grid_x]


def candidate_splits(tp: int, microbatch: int, grid_x: int, grid_y: int) -> list[TpSplit]:
    return [TpSplit(shape, f) for shape in region_shapes(tp, grid_x, grid_y)
            for f in partition_options(tp, microbatch)]


def shard_op(op: OperatorNode, split: TpSplit) -> OperatorNode:
    """Per-die view of ``op`` under ``split`` (ceil-divided shapes)."""
    b, s, h, k = (split.factor(d) for d in DIMS)
    if split.tp == 1:
        return op
    ck = shard_bytes(op.checkpoint_bytes, split.tp)
    if op.kind in GEMM_KINDS:
        m, kk, n = op.shape
        m2, k2, n2 = -(-m // (b * s)), -(-kk // k), -(-n // h)
        flops = 2.0 * m2 * k2 * n2
        return OperatorNode(op.name, op.kind, (m2, k2, n2), flops, 2.0 * flops, ck, op.tp_comm_after)
    if op.kind == FLASH:
        bb, heads, seq, dh = op.shape[0], op.shape[1], op.shape[2], op.shape[-1]
        b2, heads2, sq = -(-bb // b), -(-heads // (h * k)), -(-seq // s)
        ratio = (b2 * heads2 * sq) / (bb * heads * seq) if bb * heads * seq else 0.0
        shape = (b2, heads2, sq, dh) if s == 1 else (b2, heads2, sq, seq, dh)
        return OperatorNode(op.name, op.kind, shape, op.fwd_flops * ratio, op.bwd_flops * ratio,
                            ck, op.tp_comm_after)
    if op.kind in ELEMENTWISE_KINDS:
        elems = op.shape[0]
        e2 = -(-elems // split.tp)
        ratio = e2 / elems if elems else 0.0
        return OperatorNode(op.name, op.kind, (e2,), op.fwd_flops * ratio, op.bwd_flops * ratio,
                            ck, op.tp_comm_after)
    raise ValueError(f"unknown operator kind {op.kind!r}")


@dataclass(frozen=True)
class Collective:
    kind: str          # "allreduce" | "allgather"
    group: int
    nbytes: float


def op_collectives(op: OperatorNode, split: TpSplit) -> list[Collective]:
    """Forward collectives after ``op``; the backward pass mirrors them."""
    b, s, h, k = (split.factor(d) for d in DIMS)
    out = []
    if op.kind in GEMM_KINDS:
        m, _, n = op.shape
        m2, n2 = -(-m // (b * s)), -(-n // h)
        if k > 1:
            out.append(Collective("allreduce", k, m2 * n2 * ACT_BYTES))
        if h > 1 and op.tp_comm_after:
            out.append(Collective("allreduce", h, m2 * n * ACT_BYTES))
    elif op.kind == FLASH and s > 1:
        bb, heads, seq, dh = op.shape[0], op.shape[1], op.shape[2], op.shape[-1]
        kv = 2 * (-(-bb // b)) * (-(-heads // (h * k))) * seq * dh * ACT_BYTES
        out.append(Collective("allgather", s, kv))
    return out


def weight_grad_collectives(op: OperatorNode, split: TpSplit) -> list[Collective]:
    """Once-per-iteration weight-gradient all-reduce when B or S is split."""
    group = split.factor("B") * split.factor("S")
    if group <= 1 or op.kind not in GEMM_KINDS:
        return []
    _, kk, n = op.shape
    return [Collective("allreduce", group,
                       (-(-kk // split.factor("K"))) * (-(-n // split.factor("H"))) * ACT_BYTES)]


# -- ring embedding ----------------------------------------------------------

@dataclass(frozen=True)
class RingEmbedding:
    order: tuple[Coord, ...]      # (x, y) local coordinates
    is_cycle: bool                # every ring hop is a physical link
    max_link_load: int            # flows per directed link, worst case
    chain: bool = False           # no closed ring possible (odd area); flagged

    @property
    def bandwidth_factor(self) -> float:
        return 1.0 / self.max_link_load if self.max_link_load else 1.0


def _snake(rows: int, cols: int) -> list[Coord]:
    order = []
    for y in range(rows):
        xs = range(cols) if y % 2 == 0 else range(cols - 1, -1, -1)
        order.extend((x, y) for x in xs)
    return order


def _hamiltonian_cycle(rows: int, cols: int) -> list[Coord] | None:
    if rows * cols % 2 or rows < 2 or cols < 2:
        return None
    transpose = rows % 2 == 1
    r, c = (cols, rows) if transpose else (rows, cols)
    # down column 0, then snake back up over columns 1..c-1 ending next to the start
    order = [(0, y) for y in range(r)]
    for i, y in enumerate(range(r - 1, -1, -1)):
        xs = range(1, c) if i % 2 == 0 else range(c - 1, 0, -1)
        order.extend((x, y) for x in xs)
    if transpose:
        order = [(y, x) for x, y in order]
    return order


def ring_embedding(shape: tuple[int, int]) -> RingEmbedding:
    rows, cols = shape
    n = rows * cols
    if n == 1:
        return RingEmbedding(((0, 0),), True, 0)
    cycle = _hamiltonian_cycle(rows, cols)
    if cycle is None and n == 2:
        cycle = _snake(rows, cols)   # two adjacent dies close a ring trivially
    order = cycle if cycle is not None else _snake(rows, cols)
    load: dict[tuple[Coord, Coord], int] = {}

    def walk(seq):
        for i in range(len(seq)):
            a, b = seq[i], seq[(i + 1) % len(seq)]
            _, path = min_cost_monotone_path(a, b, lambda u, v: 0.0)
            for u, v in zip(path, path[1:]):
                load[(u, v)] = load.get((u, v), 0) + 1

    if n == 2:
        walk(order)              # a two-die ring has a single direction
    else:
        walk(order)
        walk(order[::-1])
    chain = cycle is None and n % 2 == 1
    return RingEmbedding(tuple(order), cycle is not None, max(load.values()), chain)


def collective_time(c: Collective, emb: RingEmbedding, wafer: WaferConfig) -> float:
    bw = wafer.d2d_bandwidth * emb.bandwidth_factor
    alpha = wafer.d2d_latency * (2.0 if emb.chain else 1.0)
    if c.kind == "allreduce":
        return allreduce_time(c.group, c.nbytes, bw, alpha)
    return allgather_time(c.group, c.nbytes, bw, alpha)


def ring_allreduce_mesh(split: TpSplit | tuple[int, int], nbytes: float, wafer: WaferConfig) -> float:
    """Bidirectional-ring all-reduce over the whole TP region."""
    shape = split.shape if isinstance(split, TpSplit) else tuple(split)
    tp = shape[0] * shape[1]
    if tp == 1:
        return 0.0
    return collective_time(Collective("allreduce", tp, nbytes), ring_embedding(shape), wafer)


# -- per-stage timing --------------------------------------------------------

@dataclass(frozen=True)
class OpTiming:
    name: str
    fwd: float
    bwd: float
    fwd_comm: float
    bwd_comm: float
    fwd_ema: float
    bwd_ema: float
    fwd_flops: float

    @property
    def recompute(self) -> float:
        return self.fwd + self.fwd_comm


@dataclass(frozen=True)
class LayerTiming:
    ops: tuple[OpTiming, ...]
    wgrad_comm: float

    @property
    def fwd(self) -> float:
        return sum(o.fwd + o.fwd_comm for o in self.ops)

    @property
    def bwd(self) -> float:
        return sum(o.bwd + o.bwd_comm for o in self.ops)

    @property
    def comm(self) -> float:
        return sum(o.fwd_comm + o.bwd_comm for o in self.ops)

    def recompute(self, stored) -> float:
        return sum(o.recompute for o in self.ops if o.name not in stored)

    def ema(self, stored) -> float:
        return sum(o.fwd_ema + o.bwd_ema + (0.0 if o.name in stored else o.fwd_ema)
                   for o in self.ops)


def sharded_ops(graph: Sequence[OperatorNode], split: TpSplit) -> list[OperatorNode]:
    return [shard_op(op, split) for op in graph]


def layer_timing(graph: Sequence[OperatorNode], split: TpSplit, wafer: WaferConfig,
                 perf_table: PerfTable | None = None,
                 utilization: float = DEFAULT_UTILIZATION) -> LayerTiming:
    """Latency of one layer's operators on one die of the stage, with collectives."""
    emb = ring_embedding(split.shape)
    bw = wafer.dram_bandwidth_per_die
    hw = hw_key(wafer.die, bw, utilization)
    out = []
    wgrad = 0.0
    for op in graph:
        sop = shard_op(op, split)
        if perf_table is None:
            f = op_latency(sop, wafer.die, bw, utilization, "fwd")
            b = op_latency(sop, wafer.die, bw, utilization, "bwd")
        else:
            f = perf_table.lookup(sop, hw, "fwd")
            b = perf_table.lookup(sop, hw, "bwd")
        comm = sum(collective_time(c, emb, wafer) for c in op_collectives(op, split))
        wgrad += sum(collective_time(c, emb, wafer) for c in weight_grad_collectives(op, split))
        out.append(OpTiming(op.name, f.latency, b.latency, comm, comm, f.ema_bytes, b.ema_bytes,
                            sop.fwd_flops))
    return LayerTiming(tuple(out), wgrad)


def estimate_stage_timing(graph: Sequence[OperatorNode], layers: int, split: TpSplit,
                          wafer: WaferConfig, perf_table: PerfTable | None = None,
                          stored=None, utilization: float = DEFAULT_UTILIZATION) -> StageTiming:
    """F_t, B_t and recompute time for a stage of ``layers`` layers.

    ``stored=None`` means every checkpoint is kept (no recompute).
    """
    lt = layer_timing(graph, split, wafer, perf_table, utilization)
    names = {o.name for o in lt.ops} if stored is None else set(stored)
    return StageTiming(layers * lt.fwd, layers * lt.bwd, layers * lt.recompute(names))


def recomp_items(graph: Sequence[OperatorNode], lt: LayerTiming, layers: int,
                 tp: int) -> list[RecompItem]:
    """Knapsack items for one stage: every operator across all its layers."""
    return [RecompItem(op.name, layers * o.recompute, layers * shard_bytes(op.checkpoint_bytes, tp))
            for op, o in zip(graph, lt.ops)]


# -- inter-stage link allocation --------------------------------------------

@dataclass(frozen=True)
class LinkTask:
    name: str
    src: Coord
    dst: Coord
    nbytes: float


@dataclass(frozen=True)
class LinkLoadMap:
    loads: tuple[tuple[tuple[Coord, Coord], float], ...]      # directed link -> bytes
    occupancy: tuple[tuple[tuple[Coord, Coord], int], ...]    # directed link -> task count
    routes: tuple[tuple[Coord, ...], ...]                      # per task, input order
    times: tuple[float, ...]                                   # per task, input order

    def load_dict(self) -> dict:
        return dict(self.loads)


def pp_link_allocation(tasks: Sequence[LinkTask], link_bandwidth: float,
                       punishment: float = DEFAULT_PUNISHMENT) -> LinkLoadMap:
    """Assign tasks to shortest paths, largest first; occupied links cost
    ``1 + punishment * occupancy``. A task's time is its bytes over the
    bandwidth share left on its most crowded link."""
    order = sorted(range(len(tasks)), key=lambda i: (-tasks[i].nbytes, i))
    occ: dict = {}
    load: dict = {}
    routes: list = [None] * len(tasks)
    for i in order:
        t = tasks[i]
        _, path = min_cost_monotone_path(
            t.src, t.dst, lambda u, v: 1.0 + punishment * occ.get((u, v), 0))
        for u, v in zip(path, path[1:]):
            occ[(u, v)] = occ.get((u, v), 0) + 1
            load[(u, v)] = load.get((u, v), 0.0) + t.nbytes
        routes[i] = tuple(path)
    times = []
    for t, path in zip(tasks, routes):
        share = max((occ[(u, v)] for u, v in zip(path, path[1:])), default=0)
        times.append(t.nbytes * share / link_bandwidth if share else 0.0)
    return LinkLoadMap(tuple(sorted(load.items())), tuple(sorted(occ.items())),
                       tuple(routes), tuple(times))


# -- iteration evaluation ----------------------------------------------------

@dataclass(frozen=True)
class EvaluationReport:
    iteration_time: float
    throughput: float
    useful_flops: float
    recompute_flops: float
    t_max: float
    stage_times: tuple[float, ...]
    transfer_times: tuple[float, ...]
    offload_exposed: tuple[float, ...]
    wgrad_tail: float
    compute_utilization: float
    dram_bandwidth_utilization: float
    link_utilization: float
    stage_resident_bytes: tuple[int, ...]
    heatmap: tuple[tuple[float, ...], ...]     # per-die DRAM occupancy fraction, [y][x]
    collective_time: float
    timeline: PipelineTimeline | None = field(default=None, compare=False, repr=False)

    @property
    def recompute_fraction(self) -> float:
        return self.recompute_flops / self.useful_flops if self.useful_flops else 0.0

    def to_dict(self) -> dict:
        return {"iteration_time": self.iteration_time, "throughput": self.throughput,
                "useful_flops": self.useful_flops, "recompute_flops": self.recompute_flops,
                "recompute_fraction": self.recompute_fraction, "t_max": self.t_max,
                "stage_times": list(self.stage_times), "transfer_times": list(self.transfer_times),
                "offload_exposed": list(self.offload_exposed), "wgrad_tail": self.wgrad_tail,
                "compute_utilization": self.compute_utilization,
                "dram_bandwidth_utilization": self.dram_bandwidth_utilization,
                "link_utilization": self.link_utilization,
                "stage_resident_bytes": list(self.stage_resident_bytes),
                "collective_time": self.collective_time}


@dataclass(frozen=True)
class Traffic:
    links: LinkLoadMap
    transfer: tuple[float, ...]                    # per pipeline boundary, alpha included
    offload: tuple[tuple[float, float], ...]       # per allocation: (store, fetch) seconds


def inter_stage_traffic(centers: Sequence[Coord], act_bytes: float, allocation: AllocationSet,
                        quantum: int, link_bandwidth: float, alpha: float,
                        punishment: float = DEFAULT_PUNISHMENT) -> Traffic:
    """Per-microbatch link tasks: activation and gradient transfers across
    each boundary, plus a store and a fetch for every offload allocation."""
    pp = len(centers)
    tasks = []
    for i in range(pp - 1):
        tasks.append(LinkTask(f"fwd{i}", centers[i], centers[i + 1], act_bytes))
        tasks.append(LinkTask(f"bwd{i}", centers[i + 1], centers[i], act_bytes))
    for a in allocation.allocations:
        per_mb = a.amount * quantum / peak_live_microbatches(pp, a.sender)
        tasks.append(LinkTask(f"store{a.sender}>{a.helper}", centers[a.sender], centers[a.helper], per_mb))
        tasks.append(LinkTask(f"fetch{a.helper}>{a.sender}", centers[a.helper], centers[a.sender], per_mb))
    links = pp_link_allocation(tasks, link_bandwidth, punishment)
    transfer = tuple(manhattan(centers[i], centers[i + 1]) * alpha
                     + max(links.times[2 * i], links.times[2 * i + 1]) for i in range(pp - 1))
    first = 2 * (pp - 1)
    offload = []
    for k, a in enumerate(allocation.allocations):
        hop_lat = alpha * manhattan(centers[a.sender], centers[a.helper])
        offload.append((links.times[first + 2 * k] + hop_lat, links.times[first + 2 * k + 1] + hop_lat))
    return Traffic(links, transfer, tuple(offload))


def offload_exposure(traffic: Traffic, allocation: AllocationSet, quantum: int,
                     steady: Sequence[float], dram_busy: Sequence[float],
                     dram_bandwidth: float) -> list[float]:
    """Offload time each sender cannot hide, per microbatch.

    A sender's store+fetch traffic is bounded by its link time and by the
    helper DRAM writing and reading the bytes. It hides behind the sender's
    steady compute as long as the helper's DRAM has idle time; the excess is
    serialised onto the sender's backward.
    """
    pp = len(steady)
    exposed = [0.0] * pp
    for s in range(pp):
        mine = [(k, a) for k, a in enumerate(allocation.allocations) if a.sender == s]
        if not mine:
            continue
        live = peak_live_microbatches(pp, s)
        link_time = sum(traffic.offload[k][0] + traffic.offload[k][1] for k, _ in mine)
        dram_time = max(2 * a.amount * quantum / live / dram_bandwidth for _, a in mine)
        helper_idle = min(max(0.0, steady[a.helper] - dram_busy[a.helper]) for _, a in mine)
        window = min(steady[s], helper_idle)
        exposed[s] = max(0.0, max(link_time, dram_time) - window)
    return exposed


def evaluate_iteration(wafer: WaferConfig, workload: TrainingWorkload, tp: int, pp: int,
                       split: TpSplit, recomp: RecompConfig, placement: PlacementMap,
                       allocation: AllocationSet = EMPTY, perf_table: PerfTable | None = None,
                       utilization: float = DEFAULT_UTILIZATION,
                       punishment: float = DEFAULT_PUNISHMENT) -> EvaluationReport:
    if split.tp != tp:
        raise ValueError(f"split {split.label} does not match tp={tp}")
    if placement.pp != pp or len(recomp.stored) != pp:
        raise ValueError("placement / recomputation config do not match pp")
    if tuple(placement.tp_shape) != tuple(split.shape):
        raise ValueError("placement regions do not match the TP shape")
    model, mb, n = workload.model, workload.microbatch_size, workload.num_microbatches
    graph = workload.graph
    layers = layers_per_stage(model.num_layers, pp)
    lt = layer_timing(graph, split, wafer, perf_table, utilization)
    quantum = recomp.quantum
    cap = wafer.dram_capacity_per_die
    dram_bw = wafer.dram_bandwidth_per_die

    # memory: resident bytes per die after offload
    resident = []
    for s in range(pp):
        peak = stage_memory_peak(s, workload, recomp.stored[s], tp, pp)
        r = peak - allocation.offloaded(s) * quantum + allocation.received(s) * quantum
        if r > cap:
            raise CapacityError(s, r, cap)
        resident.append(r)

    centers = [reg.center for reg in placement.regions]
    base = [StageTiming(layers[s] * lt.fwd, layers[s] * lt.bwd,
                        layers[s] * lt.recompute(recomp.stored[s])) for s in range(pp)]
    dram_busy = [layers[s] * lt.ema(recomp.stored[s]) / dram_bw for s in range(pp)]
    traffic = inter_stage_traffic(centers, boundary_bytes(model, mb, tp), allocation, quantum,
                                  wafer.d2d_bandwidth, wafer.d2d_latency, punishment)
    exposed = offload_exposure(traffic, allocation, quantum, [b.steady_time for b in base],
                               dram_busy, dram_bw)
    transfer = traffic.transfer
    links = traffic.links
    timings = [StageTiming(b.fwd_time, b.bwd_time + e, b.recompute_time) for b, e in zip(base, exposed)]
    timeline = schedule_1f1b(pp, n, timings, transfer)
    tail = max(layers[s] * lt.wgrad_comm for s in range(pp))
    iteration = timeline.iteration_time + tail

    useful = workload.useful_flops()
    recompute_flops = sum(layers[s] * sum(op.fwd_flops for op in graph if op.name not in recomp.stored[s])
                          for s in range(pp)) * n
    dies = tp * pp
    compute_util = useful / (iteration * dies * wafer.die.compute_flops) if iteration else 0.0
    dram_bytes = sum(layers[s] * lt.ema(recomp.stored[s]) for s in range(pp)) * tp * n
    dram_bytes += sum(a.amount * quantum * 2 * n / peak_live_microbatches(pp, a.sender)
                      for a in allocation.allocations)
    dram_util = dram_bytes / (iteration * dies * dram_bw) if iteration else 0.0
    nlinks = 2 * ((wafer.grid_x - 1) * wafer.grid_y + (wafer.grid_y - 1) * wafer.grid_x)
    link_bytes = sum(v for _, v in links.loads) * n
    link_util = link_bytes / (iteration * nlinks * wafer.d2d_bandwidth) if iteration and nlinks else 0.0

    heat = [[0.0] * wafer.grid_x for _ in range(wafer.grid_y)]
    for s, reg in enumerate(placement.regions):
        for x, y in reg.dies():
            heat[y][x] = resident[s] / cap if cap else 0.0
    stage_steady = tuple(t.steady_time for t in timings)
    coll = sum(layers[s] * lt.comm for s in range(pp)) * n + tail
    return EvaluationReport(
        iteration_time=iteration, throughput=useful / iteration if iteration else 0.0,
        useful_flops=useful, recompute_flops=float(recompute_flops), t_max=max(stage_steady),
        stage_times=stage_steady, transfer_times=tuple(transfer), offload_exposed=tuple(exposed),
        wgrad_tail=tail, compute_utilization=compute_util, dram_bandwidth_utilization=dram_util,
        link_utilization=link_util, stage_resident_bytes=tuple(resident),
        heatmap=tuple(tuple(r) for r in heat), collective_time=coll, timeline=timeline)


# -- first-order baseline ----------------------------------------------------

def default_eta(workload: TrainingWorkload) -> float:
    """Forward FLOPs spent per byte of checkpoint produced."""
    fwd = sum(op.fwd_flops for op in workload.graph)
    ckpt = sum(op.checkpoint_bytes for op in workload.graph)
    return fwd / ckpt if ckpt else 0.0


@dataclass(frozen=True)
class BaselineCost:
    comp: float
    recomp: float
    access: float
    comm: float
    eta: float
    cost: float


def analytic_baseline(wafer: WaferConfig, workload: TrainingWorkload, tp: int, pp: int,
                      eta: float | None = None) -> BaselineCost:
    """First-order load: C_comp + C_recomp + eta * (C_access + C_comm), in FLOPs.

    The model is schedule- and topology-blind on purpose: checkpoints of all
    ``n`` microbatches are assumed live at once, whatever does not fit beside
    modelP in the aggregate DRAM of all dies is recomputed at ``eta`` FLOPs
    per byte, and a recomputed checkpoint moves through DRAM exactly as a
    stored one would, so C_access does not depend on the recompute share.
    Nothing ties the load to the wafer's compute rate, which is why it keeps
    preferring the largest memory.
    """
    model, n = workload.model, workload.num_microbatches
    eta = default_eta(workload) if eta is None else eta
    comp = workload.useful_flops()
    produced = sum(op.checkpoint_bytes for op in workload.graph) * model.num_layers * n
    spare = max(0, wafer.total_dram_bytes - workload.modelP_bytes)
    overflow = max(0, produced - spare)
    recomp = eta * overflow
    access = workload.modelP_bytes + 2 * produced
    bsh = workload.microbatch_size * model.seq_len * model.hidden_size * ACT_BYTES
    tp_bytes = 4 * model.num_layers * n * (2.0 * (tp - 1) / tp * bsh if tp > 1 else 0.0)
    pp_bytes = 2 * (pp - 1) * n * bsh
    comm = tp_bytes + pp_bytes
    cost = comp + recomp + eta * (access + comm)
    return BaselineCost(comp, recomp, access, comm, eta, cost)
