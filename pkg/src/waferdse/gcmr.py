"""Globally coordinated recomputation: per-stage knapsack profiles, the
min-max memory DP over pipeline stages, and Sender/Helper pairing.

All memory is handled in integer quanta. A stage's steady time under a
checkpoint budget ``q`` is ``B + F + R - P(q)`` where ``R`` is the time to
recompute every operator and ``P(q)`` the recompute time avoided by storing
the best subset within ``q``. When ``R == F`` this is ``B + 2F - P(q)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class GcmrInfeasible(RuntimeError):
    pass


class PairingInfeasible(RuntimeError):
    pass


@dataclass(frozen=True)
class RecompItem:
    """An operator (all layers of a stage) that can be stored or recomputed.

    ``checkpoint_bytes`` is per die and per live microbatch.
    """

    name: str
    recompute_time: float
    checkpoint_bytes: int


@dataclass(frozen=True)
class RecompProfile:
    stage: int
    quantum: int
    items: tuple[RecompItem, ...]
    weights: tuple[int, ...]          # quanta per item at the stage's live count
    saved: tuple[float, ...]          # P(q) for q = 0 .. sum(weights)
    store_sets: tuple[frozenset, ...]

    @property
    def max_quanta(self) -> int:
        return len(self.saved) - 1

    @property
    def full_recompute_time(self) -> float:
        return sum(it.recompute_time for it in self.items)

    def P(self, q: int) -> float:
        return self.saved[min(max(q, 0), self.max_quanta)]

    def store_set(self, q: int) -> frozenset:
        return self.store_sets[min(max(q, 0), self.max_quanta)]

    def stored_quanta(self, names) -> int:
        return sum(w for it, w in zip(self.items, self.weights) if it.name in names)

    def breakpoints(self) -> list[int]:
        """Budgets where P strictly increases (plus zero)."""
        return [0] + [q for q in range(1, len(self.saved)) if self.saved[q] > self.saved[q - 1]]


def quanta(nbytes: float, quantum: int) -> int:
    return int(math.ceil(nbytes / quantum))


def recomp_profile(items: Sequence[RecompItem], live_microbatches: int, quantum: int,
                   stage: int = 0) -> RecompProfile:
    """0/1 knapsack: for each budget, the store-set maximising avoided recompute time."""
    if quantum <= 0:
        raise ValueError("quantum must be positive")
    items = tuple(items)
    weights = tuple(quanta(it.checkpoint_bytes * live_microbatches, quantum) for it in items)
    cap = sum(weights)
    n = len(items)
    best = np.zeros((n + 1, cap + 1))
    take = np.zeros((n + 1, cap + 1), dtype=bool)
    for i, (it, w) in enumerate(zip(items, weights), start=1):
        best[i] = best[i - 1]
        if w <= cap:
            with_item = np.full(cap + 1, -np.inf)
            with_item[w:] = best[i - 1, :cap + 1 - w] + it.recompute_time
            better = with_item > best[i - 1]
            best[i] = np.where(better, with_item, best[i - 1])
            take[i] = better

    saved, sets = [], []
    for q in range(cap + 1):
        chosen, rem = [], q
        for i in range(n, 0, -1):
            if take[i, rem]:
                chosen.append(i - 1)
                rem -= weights[i - 1]
        chosen.sort()
        saved.append(sum(items[i].recompute_time for i in chosen))
        sets.append(frozenset(items[i].name for i in chosen))
    # enforce monotone P against float noise between equal-valued sets
    for q in range(1, cap + 1):
        if saved[q] < saved[q - 1]:
            saved[q], sets[q] = saved[q - 1], sets[q - 1]
    return RecompProfile(stage, quantum, items, weights, tuple(saved), tuple(sets))


@dataclass(frozen=True)
class RecompConfig:
    stored: tuple[frozenset, ...]      # R[t]: operator names kept in memory
    memory_quanta: tuple[int, ...]     # M[t] per die, model state included
    quantum: int
    stage_times: tuple[float, ...]
    t_max: float

    @property
    def memory_bytes(self) -> tuple[int, ...]:
        return tuple(m * self.quantum for m in self.memory_quanta)

    def to_dict(self) -> dict:
        return {"stored": [sorted(s) for s in self.stored],
                "memory_quanta": list(self.memory_quanta), "quantum": self.quantum,
                "stage_times": list(self.stage_times), "t_max": self.t_max}


def stage_time(profile: RecompProfile, fwd: float, bwd: float, q: int) -> float:
    return bwd + fwd + profile.full_recompute_time - profile.P(q)


def gcmr_dp(profiles: Sequence[RecompProfile], capacity_quanta: int,
            base_quanta: Sequence[int], fwd: Sequence[float], bwd: Sequence[float]) -> RecompConfig:
    """Min-max DP over stages, last stage first.

    ``T[t, m]`` is the best bottleneck time of stages ``t..pp-1`` given ``m``
    quanta shared among them; stage ``t`` takes ``base[t] + q`` quanta. The
    unwind starts from the full wafer budget ``pp * C`` and hands each stage
    the smallest allotment that achieves the optimum.
    """
    pp = len(profiles)
    total = pp * capacity_quanta
    if sum(base_quanta) > total:
        raise GcmrInfeasible(
            f"model state needs {sum(base_quanta)} quanta but the stages hold {total}")
    T = np.zeros((pp + 1, total + 1))
    choice = np.full((pp, total + 1), -1, dtype=np.int64)
    for t in range(pp - 1, -1, -1):
        best = np.full(total + 1, np.inf)
        arg = np.full(total + 1, -1, dtype=np.int64)
        for q in profiles[t].breakpoints():
            w = base_quanta[t] + q
            if w > total:
                break
            st = stage_time(profiles[t], fwd[t], bwd[t], q)
            cand = np.full(total + 1, np.inf)
            cand[w:] = np.maximum(T[t + 1, :total + 1 - w], st)
            better = cand < best
            best = np.where(better, cand, best)
            arg = np.where(better, q, arg)
        T[t] = best
        choice[t] = arg

    if not np.isfinite(T[0, total]):
        raise GcmrInfeasible("no memory split satisfies every stage's model state")
    remaining = total
    stored, mem, times = [], [], []
    for t in range(pp):
        q = int(choice[t, remaining])
        m_t = base_quanta[t] + q
        stored.append(profiles[t].store_set(q))
        mem.append(m_t)
        times.append(stage_time(profiles[t], fwd[t], bwd[t], q))
        remaining -= m_t
    return RecompConfig(tuple(stored), tuple(mem), profiles[0].quantum if profiles else 1,
                        tuple(times), float(T[0, total]))


def identify_senders_helpers(memory: Sequence[int], capacity: int):
    """Split stages into Senders (memory above capacity) and Helpers.

    Returns ``(senders, helpers)`` as lists of ``(stage, amount)``: overflow
    for senders, free capacity for helpers, both sorted descending with stage
    id as tie-break.
    """
    senders = [(t, m - capacity) for t, m in enumerate(memory) if m > capacity]
    helpers = [(t, capacity - m) for t, m in enumerate(memory) if m <= capacity]
    senders.sort(key=lambda x: (-x[1], x[0]))
    helpers.sort(key=lambda x: (-x[1], x[0]))
    return senders, helpers


@dataclass(frozen=True)
class MemPair:
    sender: int
    helper: int
    offload: int

    def __post_init__(self):
        if self.offload <= 0:
            raise ValueError("offload must be positive")
        if self.sender == self.helper:
            raise ValueError("a stage cannot pair with itself")


def pair_memory(senders: Sequence[tuple[int, int]],
                helpers: Sequence[tuple[int, int]]) -> list[MemPair]:
    """Greedy largest-overflow to largest-free pairing; senders may span helpers."""
    need = sum(a for _, a in senders)
    free = sum(a for _, a in helpers)
    if free < need:
        raise PairingInfeasible(f"overflow {need} exceeds free capacity {free} by {need - free}")
    pairs = []
    hs = [list(h) for h in helpers]
    j = 0
    for stage, overflow in senders:
        left = overflow
        while left > 0:
            while hs[j][1] == 0:
                j += 1
            amount = min(left, hs[j][1])
            pairs.append(MemPair(stage, hs[j][0], amount))
            hs[j][1] -= amount
            left -= amount
    return pairs
