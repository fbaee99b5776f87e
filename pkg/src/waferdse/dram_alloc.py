"""Priority-queue assignment of each Sender's overflow to Helper DRAM."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Sequence

from .gcmr import MemPair
from .placement import PlacementMap, global_cost, manhattan, route_pair


class AllocationInfeasible(RuntimeError):
    pass


@dataclass(frozen=True)
class Allocation:
    sender: int
    helper: int
    amount: int     # quanta
    cost: float     # Dist * (1 + gamma) of the sender -> helper route


@dataclass(frozen=True)
class AllocationSet:
    allocations: tuple[Allocation, ...]
    residual: tuple[tuple[int, int], ...]   # (helper stage, remaining free quanta)

    def for_sender(self, sender: int) -> list[Allocation]:
        return [a for a in self.allocations if a.sender == sender]

    def offloaded(self, stage: int) -> int:
        return sum(a.amount for a in self.allocations if a.sender == stage)

    def received(self, stage: int) -> int:
        return sum(a.amount for a in self.allocations if a.helper == stage)

    @property
    def total(self) -> int:
        return sum(a.amount for a in self.allocations)

    def as_pairs(self) -> list[MemPair]:
        return [MemPair(a.sender, a.helper, a.amount) for a in self.allocations]

    def to_dict(self) -> dict:
        return {"allocations": [{"sender": a.sender, "helper": a.helper, "quanta": a.amount,
                                 "cost": a.cost} for a in self.allocations],
                "residual": [list(r) for r in self.residual]}


EMPTY = AllocationSet((), ())


def helper_costs(sender: int, helpers: Sequence[int], placement: PlacementMap) -> dict[int, float]:
    """Dist * (1 + gamma) from ``sender`` to each helper, with gamma taken
    against the placement's pipeline paths."""
    busy = global_cost(placement, 0.0).paths.pipeline_links()
    centers = [r.center for r in placement.regions]
    out = {}
    for h in helpers:
        _, gamma = route_pair(centers[sender], centers[h], busy)
        out[h] = manhattan(centers[sender], centers[h]) * (1 + gamma)
    return out


def allocate_overflow(senders: Sequence[tuple[int, int]], helpers: Sequence[tuple[int, int]],
                      placement: PlacementMap) -> AllocationSet:
    """Greedy nearest-helper allocation.

    ``senders`` and ``helpers`` are ``(stage, quanta)`` lists as produced by
    ``identify_senders_helpers``; senders are served in that order. For each
    sender a queue of helpers ordered by route cost (stage id on ties) is
    popped until the overflow is covered; a partially used helper goes back
    with its reduced capacity.
    """
    capacity = {h: c for h, c in helpers}
    allocations = []
    for sender, need in senders:
        costs = helper_costs(sender, [h for h, c in capacity.items() if c > 0], placement)
        queue = [(costs[h], h) for h in sorted(costs)]
        heapq.heapify(queue)
        while need > 0:
            if not queue:
                raise AllocationInfeasible(
                    f"stage {sender} still needs {need} quanta after exhausting all helpers")
            cost, h = heapq.heappop(queue)
            amount = min(need, capacity[h])
            allocations.append(Allocation(sender, h, amount, cost))
            capacity[h] -= amount
            need -= amount
            if capacity[h] > 0:
                heapq.heappush(queue, (cost, h))
    residual = tuple(sorted(capacity.items()))
    return AllocationSet(tuple(allocations), residual)


def queue_order(sender: int, helpers: Sequence[int], placement: PlacementMap) -> list[int]:
    """Helpers in the order the allocator would pop them."""
    costs = helper_costs(sender, helpers, placement)
    return [h for _, h in sorted((c, h) for h, c in costs.items())]
