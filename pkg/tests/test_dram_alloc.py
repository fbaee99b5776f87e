import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from waferdse.dram_alloc import (EMPTY, Allocation, AllocationInfeasible, allocate_overflow,
                                 helper_costs, queue_order)
from waferdse.gcmr import MemPair
from waferdse.placement import MeshGrid, location_aware_placement, serpentine_placement


def line(pp):
    return serpentine_placement(pp, (1, 1), MeshGrid(pp, 1))


def test_exact_capacity_single_helper():
    out = allocate_overflow([(0, 5)], [(1, 5)], line(2))
    assert [(a.sender, a.helper, a.amount) for a in out.allocations] == [(0, 1, 5)]
    assert out.residual == ((1, 0),)


def test_nearest_helper_filled_first():
    pm = line(3)
    costs = helper_costs(0, [1, 2], pm)
    assert costs[1] < costs[2]
    out = allocate_overflow([(0, 10)], [(1, 4), (2, 8)], pm)
    assert [(a.helper, a.amount) for a in out.allocations] == [(1, 4), (2, 6)]
    assert out.residual == ((1, 0), (2, 2))
    assert out.as_pairs() == [MemPair(0, 1, 4), MemPair(0, 2, 6)]


def test_two_pair_queue_order():
    grid = MeshGrid(4, 8)
    pm = location_aware_placement(8, (2, 2), grid, [(0, 7, 1.0), (1, 6, 1.0)], 1.0)
    order = queue_order(0, list(range(1, 8)), pm)
    # 1-based: S8, S7, S2 on top
    assert order[:3] == [7, 6, 1]
    assert order == [7, 6, 1, 5, 4, 2, 3]


def test_infeasible_names_stage():
    with pytest.raises(AllocationInfeasible, match="stage 0 still needs 2"):
        allocate_overflow([(0, 5)], [(1, 3)], line(2))


def test_empty_allocation():
    assert EMPTY.total == 0 and EMPTY.offloaded(0) == 0
    assert allocate_overflow([], [(1, 3)], line(2)).allocations == ()


def brute_single_sender(need, caps, costs):
    best = None
    for split in itertools.product(*[range(c + 1) for c in caps]):
        if sum(split) == need:
            v = sum(a * c for a, c in zip(split, costs))
            best = v if best is None else min(best, v)
    return best


instances = st.integers(3, 6).flatmap(lambda pp: st.tuples(
    st.just(pp), st.lists(st.integers(0, 6), min_size=pp, max_size=pp), st.integers(0, 10 ** 6)))


@settings(max_examples=60, deadline=None)
@given(instances)
def test_allocation_invariants(inst):
    pp, amounts, seed = inst
    rng = random.Random(seed)
    stages = list(range(pp))
    rng.shuffle(stages)
    k = rng.randint(1, pp - 1)
    senders = [(s, amounts[s] + 1) for s in stages[:k]]
    helpers = [(h, amounts[h]) for h in sorted(stages[k:])]
    pm = serpentine_placement(pp, (1, 1), MeshGrid(3, 2))
    if sum(a for _, a in senders) > sum(a for _, a in helpers):
        with pytest.raises(AllocationInfeasible):
            allocate_overflow(senders, helpers, pm)
        return
    out = allocate_overflow(senders, helpers, pm)
    assert out == allocate_overflow(senders, helpers, pm)
    for s, need in senders:
        mine = out.for_sender(s)
        assert sum(a.amount for a in mine) == need
        assert [a.cost for a in mine] == sorted(a.cost for a in mine)
    cap = dict(helpers)
    for h, left in out.residual:
        assert left == cap[h] - out.received(h) >= 0
    assert all(isinstance(a, Allocation) and a.amount > 0 for a in out.allocations)
    if len(senders) == 1:
        s, need = senders[0]
        costs = helper_costs(s, [h for h, _ in helpers], pm)
        greedy = sum(a.amount * a.cost for a in out.allocations)
        assert greedy == brute_single_sender(need, [c for _, c in helpers],
                                             [costs[h] for h, _ in helpers])
