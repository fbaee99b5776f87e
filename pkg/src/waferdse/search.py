"""Early-pruning parallelism scheduler and the genetic global optimizer.

A ``Problem`` freezes everything a (tp, pp, split) candidate needs to score
strategies quickly: per-stage knapsack items, timings, memory bases and the
placement grid. A ``Genome`` is one strategy on it (store sets, placement,
offload allocation). The GA fitness is ``t_max * GlobalCost`` normalised by
the greedy seed's values.
"""

from __future__ import annotations

import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

from .cost_model import DEFAULT_UTILIZATION, PerfTable
from .dram_alloc import Allocation, AllocationInfeasible, AllocationSet, allocate_overflow, helper_costs
from .engines import (DEFAULT_PUNISHMENT, CapacityError, EvaluationReport, TpSplit,
                      candidate_splits, evaluate_iteration, inter_stage_traffic, layer_timing,
                      offload_exposure, recomp_items)
from .gcmr import (GcmrInfeasible, PairingInfeasible, RecompConfig, RecompItem, gcmr_dp,
                   identify_senders_helpers, pair_memory, quanta, recomp_profile, stage_time)
from .hw_model import WaferConfig
from .pipeline import ScheduleError, peak_live_microbatches
from .placement import (MeshGrid, PlacementError, PlacementMap, global_cost,
                        location_aware_placement, serpentine_placement)
from .workload import TrainingWorkload, boundary_bytes, layers_per_stage, model_state_bytes

DEFAULT_QUANTUM = 256 * 2 ** 20

PRUNED = "pruned"
DELEGATED = "delegated"
DIRECT = "direct"
INFEASIBLE = "infeasible"
SCHEDULE_INFEASIBLE = "schedule-infeasible"
OP_NAMES = ("op1", "op2", "op3", "op4", "op5")


# -- problem -----------------------------------------------------------------

@dataclass(frozen=True)
class Problem:
    """Frozen inputs for scoring strategies of one parallelism candidate."""

    pp: int
    tp_shape: tuple[int, int]
    grid: MeshGrid
    items: tuple[tuple[RecompItem, ...], ...]     # per stage, operator order
    fwd: tuple[float, ...]
    bwd: tuple[float, ...]
    base_quanta: tuple[int, ...]                  # model state + stage-input buffers
    capacity_quanta: int
    quantum: int
    comm_pp: tuple[float, ...]                    # bytes per boundary (activation + gradient)
    act_bytes: float = 0.0                        # per-microbatch boundary transfer
    link_latency: float = 0.0
    dram_bandwidth: float = 1.0
    ema_base: tuple[float, ...] = ()              # per-stage DRAM bytes with nothing recomputed
    ema_recompute: tuple[tuple[float, ...], ...] = ()   # per stage, per item, extra bytes if recomputed
    punishment: float = DEFAULT_PUNISHMENT
    profiles: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if not self.profiles:
            profs = tuple(recomp_profile(self.items[t], peak_live_microbatches(self.pp, t),
                                         self.quantum, t) for t in range(self.pp))
            object.__setattr__(self, "profiles", profs)
        for t, b in enumerate(self.base_quanta):
            if b > self.capacity_quanta:
                raise GcmrInfeasible(
                    f"stage {t} model state needs {b} quanta per die, capacity is {self.capacity_quanta}")

    @property
    def op_names(self) -> tuple[str, ...]:
        return tuple(it.name for it in self.items[0]) if self.items else ()

    def weight(self, t: int, name: str) -> int:
        prof = self.profiles[t]
        for it, w in zip(prof.items, prof.weights):
            if it.name == name:
                return w
        raise KeyError(name)

    def memory(self, stored: Sequence[frozenset]) -> list[int]:
        return [self.base_quanta[t] + self.profiles[t].stored_quanta(stored[t]) for t in range(self.pp)]

    def steady(self, stored: Sequence[frozenset]) -> list[float]:
        out = []
        for t in range(self.pp):
            rec = sum(it.recompute_time for it in self.items[t] if it.name not in stored[t])
            out.append(self.fwd[t] + self.bwd[t] + rec)
        return out

    def dram_busy(self, stored: Sequence[frozenset]) -> list[float]:
        if not self.ema_base:
            return [0.0] * self.pp
        out = []
        for t in range(self.pp):
            extra = sum(e for it, e in zip(self.items[t], self.ema_recompute[t]) if it.name not in stored[t])
            out.append((self.ema_base[t] + extra) / self.dram_bandwidth)
        return out

    def centers(self, placement: PlacementMap):
        return [r.center for r in placement.regions]

    def global_cost(self, g: "Genome") -> float:
        pairs = [(a.sender, a.helper, a.amount * self.quantum) for a in g.allocation.allocations]
        return global_cost(g.placement, self.comm_pp, pairs).cost

    def t_max(self, g: "Genome") -> float:
        steady = self.steady(g.stored)
        if not g.allocation.allocations:
            return max(steady)
        traffic = inter_stage_traffic(self.centers(g.placement), self.act_bytes, g.allocation,
                                      self.quantum, self.grid.link_bandwidth, self.link_latency,
                                      self.punishment)
        exposed = offload_exposure(traffic, g.allocation, self.quantum, steady,
                                   self.dram_busy(g.stored), self.dram_bandwidth)
        return max(s + e for s, e in zip(steady, exposed))

    def recomp_config(self, g: "Genome") -> RecompConfig:
        times = self.steady(g.stored)
        return RecompConfig(tuple(g.stored), tuple(self.memory(g.stored)), self.quantum,
                            tuple(times), max(times))


@dataclass(frozen=True)
class Genome:
    stored: tuple[frozenset, ...]
    placement: PlacementMap
    allocation: AllocationSet

    def key(self) -> tuple:
        return (tuple(tuple(sorted(s)) for s in self.stored), self.placement.blocks,
                tuple((a.sender, a.helper, a.amount) for a in self.allocation.allocations))


def repair(problem: Problem, stored: Sequence[frozenset], placement: PlacementMap,
           previous: Sequence[tuple[int, int, int]] = ()) -> Genome | None:
    """Rebuild a feasible allocation for ``stored`` on ``placement``.

    Earlier ``(sender, helper, quanta)`` entries are kept where still valid
    (trimmed to the new overflow and free capacity); remaining overflow is
    topped up with the priority-queue allocator. Returns ``None`` when the
    wafer cannot absorb the overflow.
    """
    stored = tuple(frozenset(s) for s in stored)
    mem = problem.memory(stored)
    senders, helpers = identify_senders_helpers(mem, problem.capacity_quanta)
    if sum(a for _, a in senders) > sum(a for _, a in helpers):
        return None
    need = dict(senders)
    free = dict(helpers)
    merged: dict[tuple[int, int], int] = {}
    for s, h, amt in previous:
        if s in need and h in free:
            take = min(amt, need[s], free[h])
            if take > 0:
                merged[(s, h)] = merged.get((s, h), 0) + take
                need[s] -= take
                free[h] -= take
    for s, _ in senders:
        if need[s] > 0:
            try:
                extra = allocate_overflow([(s, need[s])], [(h, c) for h, c in helpers if free[h] > 0
                                                           for c in [free[h]]], placement)
            except AllocationInfeasible:
                return None
            for a in extra.allocations:
                merged[(a.sender, a.helper)] = merged.get((a.sender, a.helper), 0) + a.amount
                free[a.helper] -= a.amount
            need[s] = 0
    allocations = []
    by_sender: dict[int, list] = {}
    for (s, h), amt in merged.items():
        by_sender.setdefault(s, []).append((h, amt))
    for s, _ in senders:
        entries = by_sender.get(s, [])
        if not entries:
            continue
        costs = helper_costs(s, [h for h, _ in entries], placement)
        for h, amt in entries:
            allocations.append(Allocation(s, h, amt, costs[h]))
    residual = tuple(sorted(free.items()))
    return Genome(stored, placement, AllocationSet(tuple(allocations), residual))


def greedy_seed(problem: Problem, *, seed: int = 0, anneal_steps: int = 2000) -> Genome:
    """GCMR DP, greedy pairing, location-aware placement, then queue allocation."""
    cfg = gcmr_dp(problem.profiles, problem.capacity_quanta, problem.base_quanta,
                  problem.fwd, problem.bwd)
    senders, helpers = identify_senders_helpers(cfg.memory_quanta, problem.capacity_quanta)
    pairs = pair_memory(senders, helpers)
    placement = location_aware_placement(
        problem.pp, problem.tp_shape, problem.grid,
        [(p.sender, p.helper, p.offload * problem.quantum) for p in pairs],
        list(problem.comm_pp), seed=seed, anneal_steps=anneal_steps)
    g = repair(problem, cfg.stored, placement)
    if g is None:
        raise PairingInfeasible("greedy allocation failed after successful pairing")
    return g


# -- GA operators: explicit choices ------------------------------------------

def op1_apply(problem: Problem, g: Genome, stage: int, name: str) -> Genome | None:
    """Toggle whether ``name`` is stored (True) or recomputed on ``stage``."""
    stored = list(g.stored)
    stored[stage] = stored[stage] ^ {name}
    return repair(problem, stored, g.placement, _entries(g))


def op2_apply(problem: Problem, g1: Genome, g2: Genome, t1: int, t2: int,
              cut: int) -> tuple[Genome | None, Genome | None]:
    """Exchange the store flags of operators ``cut..`` (backward order is the
    reverse of the forward order, so these are the first ones backward
    reaches) between stage ``t1`` of ``g1`` and stage ``t2`` of ``g2``."""
    names = problem.op_names
    tail = set(names[cut:])
    a = (g1.stored[t1] - tail) | (g2.stored[t2] & tail)
    b = (g2.stored[t2] - tail) | (g1.stored[t1] & tail)
    if g1 is g2 or g1.key() == g2.key():
        stored = list(g1.stored)
        stored[t1], stored[t2] = frozenset(a), frozenset(b)
        child = repair(problem, stored, g1.placement, _entries(g1))
        return child, child
    s1, s2 = list(g1.stored), list(g2.stored)
    s1[t1], s2[t2] = frozenset(a), frozenset(b)
    return (repair(problem, s1, g1.placement, _entries(g1)),
            repair(problem, s2, g2.placement, _entries(g2)))


def op3_apply(problem: Problem, g: Genome, a: int, b: int) -> Genome | None:
    """Swap the physical positions of stages ``a`` and ``b``."""
    placement = g.placement.swap(a, b)
    if not placement.is_adjacent_chain():
        return None
    return repair(problem, g.stored, placement, _entries(g))


def op4_apply(problem: Problem, g: Genome, sender: int, src: int, dst: int,
              amount: int) -> Genome | None:
    """Move ``amount`` quanta of ``sender``'s offload from helper ``src`` to ``dst``."""
    entries = _entries(g)
    have = sum(q for s, h, q in entries if s == sender and h == src)
    free = dict(g.allocation.residual).get(dst, 0)
    if amount <= 0 or have < amount or free < amount or src == dst:
        return None
    out, moved = [], 0
    for s, h, q in entries:
        if s == sender and h == src and moved < amount:
            take = min(q, amount - moved)
            moved += take
            if q > take:
                out.append((s, h, q - take))
        else:
            out.append((s, h, q))
    out.append((sender, dst, amount))
    return repair(problem, g.stored, g.placement, _merge(out))


def op5_apply(problem: Problem, g: Genome, s1: int, s2: int) -> Genome | None:
    """Exchange the helper lists of senders ``s1`` and ``s2``."""
    if s1 == s2:
        return None
    entries = _entries(g)
    out = [(s2 if s == s1 else s1 if s == s2 else s, h, q) for s, h, q in entries]
    return repair(problem, g.stored, g.placement, out)


def _entries(g: Genome) -> list[tuple[int, int, int]]:
    return [(a.sender, a.helper, a.amount) for a in g.allocation.allocations]


def _merge(entries):
    merged: dict = {}
    for s, h, q in entries:
        merged[(s, h)] = merged.get((s, h), 0) + q
    return [(s, h, q) for (s, h), q in merged.items()]


# -- GA operators: random samplers -------------------------------------------

def op1_recomp_mutate(problem: Problem, g: Genome, rng: random.Random) -> Genome | None:
    return op1_apply(problem, g, rng.randrange(problem.pp), rng.choice(problem.op_names))


def op2_recomp_crossover(problem: Problem, g1: Genome, g2: Genome,
                         rng: random.Random) -> tuple[Genome | None, Genome | None]:
    return op2_apply(problem, g1, g2, rng.randrange(problem.pp), rng.randrange(problem.pp),
                     rng.randrange(len(problem.op_names)))


def op3_placement_swap(problem: Problem, g: Genome, rng: random.Random) -> Genome | None:
    if problem.pp < 2:
        return None
    a, b = rng.sample(range(problem.pp), 2)
    return op3_apply(problem, g, a, b)


def op4_mempair_mutate(problem: Problem, g: Genome, rng: random.Random) -> Genome | None:
    entries = _entries(g)
    free = [h for h, c in g.allocation.residual if c > 0]
    if not entries or not free:
        return None
    s, src, q = rng.choice(entries)
    dst = rng.choice(free)
    cap = dict(g.allocation.residual)[dst]
    return op4_apply(problem, g, s, src, dst, rng.randint(1, min(q, cap)))


def op5_mempair_crossover(problem: Problem, g: Genome, rng: random.Random) -> Genome | None:
    senders = sorted({a.sender for a in g.allocation.allocations})
    if len(senders) < 2:
        return None
    s1, s2 = rng.sample(senders, 2)
    return op5_apply(problem, g, s1, s2)


def neighbours(problem: Problem, g: Genome) -> list[Genome]:
    """Every genome one explicit operator application away (for reachability checks)."""
    out = []
    for t in range(problem.pp):
        for name in problem.op_names:
            out.append(op1_apply(problem, g, t, name))
        for t2 in range(problem.pp):
            for cut in range(len(problem.op_names)):
                out.extend(op2_apply(problem, g, g, t, t2, cut))
    for a in range(problem.pp):
        for b in range(a + 1, problem.pp):
            out.append(op3_apply(problem, g, a, b))
    residual = dict(g.allocation.residual)
    for s, src, q in _entries(g):
        for dst, cap in residual.items():
            for amount in range(1, min(q, cap) + 1):
                out.append(op4_apply(problem, g, s, src, dst, amount))
    senders = sorted({a.sender for a in g.allocation.allocations})
    for i, s1 in enumerate(senders):
        for s2 in senders[i + 1:]:
            out.append(op5_apply(problem, g, s1, s2))
    return [x for x in out if x is not None]


# -- GA ----------------------------------------------------------------------

@dataclass(frozen=True)
class GaParams:
    population: int = 32
    steps: int = 100
    omega: float = 0.5
    seed: int = 0
    op_probs: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0, 1.0)
    random_restart: bool = False
    retries: int = 3

    def __post_init__(self):
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError("omega must lie in [0, 1]")
        if self.population < 1 or self.steps < 0:
            raise ValueError("population must be >= 1 and steps >= 0")
        if len(self.op_probs) != 5 or any(not 0.0 <= p <= 1.0 for p in self.op_probs):
            raise ValueError("op_probs needs five probabilities in [0, 1]")


@dataclass(frozen=True)
class GaResult:
    best: Genome
    fitness: float
    t_max: float
    global_cost: float
    trace: tuple[float, ...]
    seed_fitness: float


class Fitness:
    """``(t_max / t0) * (cost / c0)`` relative to the seed, memoised by genome key."""

    def __init__(self, problem: Problem, seed: Genome):
        self.problem = problem
        self.t0 = problem.t_max(seed)
        self.c0 = problem.global_cost(seed)
        self._cache: dict = {}

    def parts(self, g: Genome) -> tuple[float, float]:
        key = g.key()
        if key not in self._cache:
            self._cache[key] = (self.problem.t_max(g), self.problem.global_cost(g))
        return self._cache[key]

    def __call__(self, g: Genome) -> float:
        t, c = self.parts(g)
        tn = t / self.t0 if self.t0 > 0 else 1.0 + t
        cn = c / self.c0 if self.c0 > 0 else 1.0 + c
        return tn * cn


def _vary(problem: Problem, g: Genome, partner: Genome, params: GaParams,
          rng: random.Random) -> Genome:
    for _ in range(params.retries):
        k = rng.randrange(5)
        if rng.random() >= params.op_probs[k]:
            return g
        if k == 0:
            child = op1_recomp_mutate(problem, g, rng)
        elif k == 1:
            child = op2_recomp_crossover(problem, g, partner, rng)[0]
        elif k == 2:
            child = op3_placement_swap(problem, g, rng)
        elif k == 3:
            child = op4_mempair_mutate(problem, g, rng)
        else:
            child = op5_mempair_crossover(problem, g, rng)
        if child is not None:
            return child
    return g


def _tournament(pool, fits, rng):
    i, j = rng.randrange(len(pool)), rng.randrange(len(pool))
    return pool[i] if (fits[i], i) <= (fits[j], j) else pool[j]


def ga_optimize(problem: Problem, seed: Genome, params: GaParams = GaParams(),
                threads: int = 1) -> GaResult:
    """Evolve strategies from the greedy seed; returns the best-ever genome.

    Every random choice comes from a stream keyed by (seed, step, index), so
    results do not depend on ``threads``.
    """
    fit = Fitness(problem, seed)
    pop = [seed]
    init_rng = random.Random(f"{params.seed}:init")
    while len(pop) < params.population:
        g = seed
        walk = 1 + init_rng.randrange(8 if params.random_restart else 2)
        for _ in range(walk):
            g = _vary(problem, g, g, params, init_rng)
        pop.append(g)
    best = min(pop, key=lambda g: (fit(g), g.key()))
    best_fit = fit(best)
    trace = []
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool_exec:
        for step in range(params.steps):
            fits = [fit(g) for g in pop]

            def child(i, step=step, fits=fits):
                rng = random.Random(f"{params.seed}:{step}:{i}")
                partner = _tournament(pop, fits, rng)
                return _vary(problem, pop[i], partner, params, rng)

            offspring = list(pool_exec.map(child, range(len(pop))))
            pool = pop + offspring
            pool_fits = [fit(g) for g in pool]
            order = sorted(range(len(pool)), key=lambda i: (pool_fits[i], i))
            n_elite = math.ceil(params.omega * params.population)
            survivors = [pool[i] for i in order[:n_elite]]
            sel = random.Random(f"{params.seed}:{step}:select")
            while len(survivors) < params.population:
                survivors.append(_tournament(pool, pool_fits, sel))
            pop = survivors
            for g in pop:
                f = fit(g)
                if f < best_fit:
                    best, best_fit = g, f
            trace.append(best_fit)
    t, c = fit.parts(best)
    return GaResult(best, best_fit, t, c, tuple(trace), fit(seed))


# -- building problems from models -------------------------------------------

@dataclass(frozen=True)
class SearchKnobs:
    quantum: int = DEFAULT_QUANTUM
    utilization: float = DEFAULT_UTILIZATION
    punishment: float = DEFAULT_PUNISHMENT
    fast: bool = False
    ga: GaParams = GaParams()
    ga_top_k: int = 2
    anneal_steps: int = 2000


def build_problem(wafer: WaferConfig, workload: TrainingWorkload, tp: int, pp: int,
                  split: TpSplit, knobs: SearchKnobs = SearchKnobs(),
                  perf_table: PerfTable | None = None) -> Problem:
    model = workload.model
    layers = layers_per_stage(model.num_layers, pp)
    lt = layer_timing(workload.graph, split, wafer, perf_table, knobs.utilization)
    q = knobs.quantum
    boundary = boundary_bytes(model, workload.microbatch_size, tp)
    state = model_state_bytes(model, tp, pp)
    items, base = [], []
    for t in range(pp):
        items.append(tuple(recomp_items(workload.graph, lt, layers[t], tp)))
        base.append(quanta(state + boundary * peak_live_microbatches(pp, t), q))
    ema_base = tuple(layers[t] * sum(o.fwd_ema + o.bwd_ema for o in lt.ops) for t in range(pp))
    ema_rec = tuple(tuple(layers[t] * o.fwd_ema for o in lt.ops) for t in range(pp))
    return Problem(
        pp=pp, tp_shape=split.shape,
        grid=MeshGrid(wafer.grid_x, wafer.grid_y, wafer.d2d_bandwidth),
        items=tuple(items),
        fwd=tuple(layers[t] * lt.fwd for t in range(pp)),
        bwd=tuple(layers[t] * lt.bwd for t in range(pp)),
        base_quanta=tuple(base), capacity_quanta=int(wafer.dram_capacity_per_die // q), quantum=q,
        comm_pp=tuple(2.0 * boundary for _ in range(pp - 1)), act_bytes=boundary,
        link_latency=wafer.d2d_latency, dram_bandwidth=wafer.dram_bandwidth_per_die,
        ema_base=ema_base, ema_recompute=ema_rec, punishment=knobs.punishment)


# -- central scheduler -------------------------------------------------------

@dataclass(frozen=True)
class LedgerEntry:
    tp: int
    pp: int
    split: str
    disposition: str
    delegated: bool = False
    throughput: float = 0.0
    iteration_time: float = 0.0
    reason: str = ""
    ga: bool = False

    def to_dict(self) -> dict:
        return {"tp": self.tp, "pp": self.pp, "split": self.split,
                "disposition": self.disposition, "delegated": self.delegated,
                "throughput": self.throughput, "iteration_time": self.iteration_time,
                "reason": self.reason, "ga": self.ga}


@dataclass(frozen=True)
class CandidateResult:
    tp: int
    pp: int
    split: TpSplit
    problem: Problem
    genome: Genome
    report: EvaluationReport
    fitness: float = 1.0
    ga: GaResult | None = None


@dataclass(frozen=True)
class SearchResult:
    best: CandidateResult | None
    ledger: tuple[LedgerEntry, ...]
    exhausted: bool


def tp_options(mp: int) -> list[int]:
    """TP degrees for ``mp`` dies: 1 or an even divisor."""
    return [tp for tp in range(1, mp + 1) if mp % tp == 0 and (tp == 1 or tp % 2 == 0)]


def model_pruned(modelP_bytes: float, mp: int, capacity: int) -> bool:
    """Pruning guard: modelP cannot fit the aggregate memory of ``mp`` dies."""
    return modelP_bytes / mp > capacity


def evaluate_candidate(wafer: WaferConfig, workload: TrainingWorkload, tp: int, pp: int,
                       split: TpSplit, knobs: SearchKnobs, perf_table: PerfTable | None = None,
                       run_ga: bool = False) -> CandidateResult:
    problem = build_problem(wafer, workload, tp, pp, split, knobs, perf_table)
    genome = greedy_seed(problem, seed=knobs.ga.seed, anneal_steps=knobs.anneal_steps)
    ga = None
    fitness = 1.0
    if run_ga:
        ga = ga_optimize(problem, genome, knobs.ga)
        genome, fitness = ga.best, ga.fitness
    report = evaluate_iteration(wafer, workload, tp, pp, split, problem.recomp_config(genome),
                                genome.placement, genome.allocation, perf_table,
                                knobs.utilization, knobs.punishment)
    return CandidateResult(tp, pp, split, problem, genome, report, fitness, ga)


def enumerate_candidates(wafer: WaferConfig, workload: TrainingWorkload):
    """Candidate enumeration: yields ``(tp, pp, split | None, disposition, delegated, reason)``."""
    MP, C = wafer.num_dies, wafer.dram_capacity_per_die
    L = workload.model.num_layers
    for mp in range(1, MP + 1):
        for tp in tp_options(mp):
            pp = mp // tp
            if pp > L:
                continue
            if model_pruned(workload.modelP_bytes, mp, C):
                yield tp, pp, None, PRUNED, False, "modelP / mp > C"
                continue
            need = (workload.modelP_bytes + workload.checkpoint_bytes_total(pp)) / mp
            delegated = need > C
            splits = candidate_splits(tp, workload.microbatch_size, wafer.grid_x, wafer.grid_y)
            if not splits:
                yield tp, pp, None, INFEASIBLE, delegated, "no region shape fits the grid"
            for split in splits:
                yield tp, pp, split, DELEGATED if delegated else DIRECT, delegated, ""


def search_parallelism(wafer: WaferConfig, workload: TrainingWorkload,
                       knobs: SearchKnobs = SearchKnobs(), perf_table: PerfTable | None = None,
                       threads: int = 1) -> SearchResult:
    """Parallelism search with fast triage: every surviving split is scored greedily,
    then the best ``ga_top_k`` are refined by the GA unless ``knobs.fast``."""
    MP, C = wafer.num_dies, wafer.dram_capacity_per_die
    if model_pruned(workload.modelP_bytes, MP, C):
        entry = LedgerEntry(0, 0, "-", PRUNED, reason="modelP / MP > C: model does not fit the wafer")
        return SearchResult(None, (entry,), True)

    cands = list(enumerate_candidates(wafer, workload))
    todo = [c for c in cands if c[2] is not None]

    def triage(c):
        tp, pp, split, disp, delegated, _ = c
        try:
            if workload.num_microbatches < pp:
                raise ScheduleError(f"n={workload.num_microbatches} < pp={pp}")
            return evaluate_candidate(wafer, workload, tp, pp, split, knobs, perf_table), ""
        except ScheduleError as e:
            return None, f"{SCHEDULE_INFEASIBLE}: {e}"
        except (GcmrInfeasible, PairingInfeasible, PlacementError, CapacityError,
                AllocationInfeasible) as e:
            return None, f"{INFEASIBLE}: {e}"

    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        outcomes = list(ex.map(triage, todo))
    results = {}
    for c, (res, why) in zip(todo, outcomes):
        results[(c[0], c[1], c[2])] = (res, why)

    refined = {}
    scored = [(k, r) for k, (r, _) in results.items() if r is not None]
    if not knobs.fast and scored:
        scored.sort(key=lambda kr: (-kr[1].report.throughput, kr[0][0], kr[0][1], kr[0][2].label))
        top = scored[:knobs.ga_top_k]

        def refine(kr):
            (tp, pp, split), _ = kr
            try:
                return evaluate_candidate(wafer, workload, tp, pp, split, knobs, perf_table, run_ga=True)
            except CapacityError:
                return None

        with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
            for (k, _), r in zip(top, ex.map(refine, top)):
                if r is not None:
                    refined[k] = r

    ledger = []
    best = None
    for tp, pp, split, disp, delegated, reason in cands:
        if split is None:
            ledger.append(LedgerEntry(tp, pp, "-", disp, delegated, reason=reason))
            continue
        res, why = results[(tp, pp, split)]
        if res is None:
            kind = why.split(":", 1)[0]
            ledger.append(LedgerEntry(tp, pp, split.label, kind, delegated, reason=why.split(": ", 1)[1]))
            continue
        res = refined.get((tp, pp, split), res)
        ledger.append(LedgerEntry(tp, pp, split.label, disp, delegated, res.report.throughput,
                                  res.report.iteration_time, ga=res.ga is not None))
        if best is None or res.report.throughput > best.report.throughput:
            best = res
    return SearchResult(best, tuple(ledger), best is None)
