import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import all_block_paths, monotone_paths

from waferdse.placement import (MeshGrid, PlacementError, PlacementMap, Region, global_cost,
                                link, location_aware_placement, manhattan, min_cost_monotone_path,
                                path_links, route_pair, serpentine_placement, xy_route)

TWO_PAIRS = [(0, 7, 1.0), (1, 6, 1.0)]


def test_single_stage_at_origin():
    pm = serpentine_placement(1, (1, 1), MeshGrid(4, 4))
    assert pm.blocks == ((0, 0),)
    assert pm.center(0) == (0, 0)
    assert global_cost(pm, 1.0).cost == 0.0


def test_one_by_four_strips_on_four_by_eight():
    pm = serpentine_placement(8, (1, 4), MeshGrid(4, 8))
    assert [r.area for r in pm.regions] == [4] * 8
    assert [r.y0 for r in pm.regions] == list(range(8))
    assert pm.is_adjacent_chain()
    with pytest.raises(PlacementError, match="8 blocks available"):
        serpentine_placement(9, (1, 4), MeshGrid(4, 8))


def test_serpentine_snakes_and_center_rounds_to_anchor():
    pm = serpentine_placement(4, (2, 2), MeshGrid(4, 4))
    assert pm.blocks == ((0, 0), (1, 0), (1, 1), (0, 1))
    assert Region(2, 2, 2, 2).center == (2, 2)
    assert Region(0, 0, 3, 3).center == (1, 1)
    assert pm.to_grid_text().splitlines()[0] == "1 1 2 2"


def test_xy_route_goes_x_first():
    assert xy_route((0, 0), (2, 1)) == [(0, 0), (1, 0), (2, 0), (2, 1)]
    assert xy_route((3, 3), (3, 3)) == [(3, 3)]


def test_no_pairs_means_location_aware_equals_serpentine():
    grid = MeshGrid(4, 8)
    a = serpentine_placement(8, (2, 2), grid)
    b = location_aware_placement(8, (2, 2), grid, [], 1.0)
    assert global_cost(b, 1.0).cost == global_cost(a, 1.0).cost


def test_two_pair_instance():
    grid = MeshGrid(4, 8)
    ser = serpentine_placement(8, (2, 2), grid)
    loc = location_aware_placement(8, (2, 2), grid, TWO_PAIRS, 1.0)
    rs, rl = global_cost(ser, 1.0, TWO_PAIRS), global_cost(loc, 1.0, TWO_PAIRS)
    assert (rs.paths.pipeline_hops, rs.paths.pair_hops) == (14, 12)
    assert (rl.paths.pipeline_hops, rl.paths.pair_hops) == (14, 4)
    assert rl.paths.avg_pair_hops == 2.0
    assert loc.method == "exhaustive"
    assert loc.is_adjacent_chain()


def brute_best(pp, shape, grid, pairs, loads):
    rows, cols = shape
    bx, by = grid.grid_x // cols, grid.grid_y // rows
    return min(global_cost(PlacementMap(grid.grid_x, grid.grid_y, shape, p), loads, pairs).cost
               for p in all_block_paths(bx, by, pp))


@pytest.mark.parametrize("seed", range(12))
def test_branch_and_bound_matches_exhaustive_paths(seed):
    rng = random.Random(seed)
    grid = MeshGrid(rng.choice([3, 4]), rng.choice([3, 4]))
    pp = rng.randint(2, 5)
    pairs = [(rng.randrange(pp), rng.randrange(pp), rng.randint(1, 4)) for _ in range(2)]
    pairs = [p for p in pairs if p[0] != p[1]]
    loads = [rng.randint(1, 3) for _ in range(pp - 1)]
    pm = location_aware_placement(pp, (1, 1), grid, pairs, loads)
    got = global_cost(pm, loads, pairs).cost
    assert got == brute_best(pp, (1, 1), grid, pairs, loads)
    assert pm.is_adjacent_chain()


def test_three_stage_instance_exhaustive():
    grid = MeshGrid(3, 3)
    pairs = [(0, 2, 5.0)]
    pm = location_aware_placement(3, (1, 1), grid, pairs, 1.0)
    assert global_cost(pm, 1.0, pairs).cost == brute_best(3, (1, 1), grid, pairs, 1.0) == 2 + 2 * 5


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10 ** 6))
def test_never_worse_than_serpentine(pp, seed):
    rng = random.Random(seed)
    grid = MeshGrid(4, 4)
    pairs = [(rng.randrange(pp), rng.randrange(pp), rng.random()) for _ in range(3)]
    pairs = [p for p in pairs if p[0] != p[1]]
    loc = location_aware_placement(pp, (1, 2), grid, pairs, 1.0)
    ser = serpentine_placement(pp, (1, 2), grid)
    assert global_cost(loc, 1.0, pairs).cost <= global_cost(ser, 1.0, pairs).cost
    assert loc.is_adjacent_chain()


def test_annealing_above_threshold_keeps_adjacency():
    grid = MeshGrid(4, 4)
    pairs = [(0, 11, 2.0), (2, 9, 1.0)]
    loc = location_aware_placement(12, (1, 1), grid, pairs, 1.0, anneal_steps=2000)
    assert loc.method == "annealing"
    assert loc.is_adjacent_chain()
    ser = serpentine_placement(12, (1, 1), grid)
    assert global_cost(loc, 1.0, pairs).cost <= global_cost(ser, 1.0, pairs).cost
    again = location_aware_placement(12, (1, 1), grid, pairs, 1.0, anneal_steps=2000)
    assert again == loc


@settings(max_examples=80, deadline=None)
@given(st.tuples(st.integers(0, 4), st.integers(0, 4)), st.tuples(st.integers(0, 4), st.integers(0, 4)),
       st.sets(st.tuples(st.integers(0, 4), st.integers(0, 4)), max_size=10))
def test_route_gamma_is_minimal_and_self_consistent(a, b, marks):
    busy = {link(u, v) for u in marks for v in ((u[0] + 1, u[1]), (u[0], u[1] + 1))}
    path, gamma = route_pair(a, b, busy)
    assert len(path) - 1 == manhattan(a, b)
    assert gamma == sum(l in busy for l in path_links(path))
    assert gamma == min(sum(l in busy for l in path_links(p)) for p in monotone_paths(a, b))


def test_min_cost_path_trivial():
    assert min_cost_monotone_path((1, 1), (1, 1), lambda u, v: 1.0) == (0.0, [(1, 1)])


def test_bad_shapes_rejected():
    with pytest.raises(PlacementError):
        MeshGrid(0, 4)
    with pytest.raises(PlacementError):
        serpentine_placement(0, (1, 1), MeshGrid(2, 2))
    with pytest.raises(PlacementError):
        global_cost(serpentine_placement(2, (1, 1), MeshGrid(2, 2)), 1.0, [(0, 3, 1.0)])
