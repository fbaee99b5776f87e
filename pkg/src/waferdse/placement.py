"""Stage placement on the 2D die mesh and the hop-weighted GlobalCost.

Stages occupy rectangular blocks of ``tp_shape = (rows, cols)`` dies taken
from a floor-tiling of the grid. A stage's center is its region's middle die,
rounded toward the anchor. Pipeline paths use XY routing between centers;
pair paths take, among all shortest paths, one sharing the fewest links with
the pipeline paths (``gamma``).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

Coord = tuple[int, int]  # (x, y): column, row
Link = tuple[Coord, Coord]

EXHAUSTIVE_MAX_PP = 10
DFS_NODE_BUDGET = 2_000_000


class PlacementError(ValueError):
    pass


def link(a: Coord, b: Coord) -> Link:
    """Undirected link key."""
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class MeshGrid:
    grid_x: int
    grid_y: int
    link_bandwidth: float = 1.0

    def __post_init__(self):
        if self.grid_x < 1 or self.grid_y < 1:
            raise PlacementError("mesh dimensions must be positive")

    def contains(self, c: Coord) -> bool:
        return 0 <= c[0] < self.grid_x and 0 <= c[1] < self.grid_y

    def neighbors(self, c: Coord) -> list[Coord]:
        x, y = c
        cand = [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)]
        return [n for n in cand if self.contains(n)]

    def links(self) -> list[Link]:
        out = []
        for y in range(self.grid_y):
            for x in range(self.grid_x):
                if x + 1 < self.grid_x:
                    out.append(link((x, y), (x + 1, y)))
                if y + 1 < self.grid_y:
                    out.append(link((x, y), (x, y + 1)))
        return out


@dataclass(frozen=True)
class Region:
    x0: int
    y0: int
    width: int
    height: int

    @property
    def center(self) -> Coord:
        return (self.x0 + (self.width - 1) // 2, self.y0 + (self.height - 1) // 2)

    @property
    def area(self) -> int:
        return self.width * self.height

    def dies(self) -> list[Coord]:
        return [(x, y) for y in range(self.y0, self.y0 + self.height)
                for x in range(self.x0, self.x0 + self.width)]


@dataclass(frozen=True)
class PlacementMap:
    grid_x: int
    grid_y: int
    tp_shape: tuple[int, int]
    blocks: tuple[Coord, ...]   # block-grid coordinate of each stage, in stage order
    method: str = "serpentine"

    @property
    def pp(self) -> int:
        return len(self.blocks)

    @property
    def regions(self) -> tuple[Region, ...]:
        rows, cols = self.tp_shape
        return tuple(Region(bx * cols, by * rows, cols, rows) for bx, by in self.blocks)

    def center(self, stage: int) -> Coord:
        return self.regions[stage].center

    def stage_of(self) -> dict[Coord, int]:
        return {d: s for s, r in enumerate(self.regions) for d in r.dies()}

    def swap(self, a: int, b: int) -> "PlacementMap":
        blocks = list(self.blocks)
        blocks[a], blocks[b] = blocks[b], blocks[a]
        return replace(self, blocks=tuple(blocks))

    def is_adjacent_chain(self) -> bool:
        return all(_block_adjacent(a, b) for a, b in zip(self.blocks, self.blocks[1:]))

    def to_grid_text(self) -> str:
        owner = self.stage_of()
        width = len(str(self.pp))
        rows = []
        for y in range(self.grid_y):
            cells = [str(owner[(x, y)] + 1).rjust(width) if (x, y) in owner else ".".rjust(width)
                     for x in range(self.grid_x)]
            rows.append(" ".join(cells))
        return "\n".join(rows)

    def to_dict(self) -> dict:
        return {"grid": [self.grid_x, self.grid_y], "tp_shape": list(self.tp_shape),
                "method": self.method,
                "stages": [{"stage": s, "anchor": [r.x0, r.y0], "width": r.width,
                            "height": r.height, "center": list(r.center)}
                           for s, r in enumerate(self.regions)]}


def _block_adjacent(a: Coord, b: Coord) -> bool:
    return abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1


def block_grid(tp_shape: tuple[int, int], grid: MeshGrid) -> tuple[int, int]:
    rows, cols = tp_shape
    if rows < 1 or cols < 1:
        raise PlacementError(f"invalid tp_shape {tp_shape}")
    return grid.grid_x // cols, grid.grid_y // rows


def _check_capacity(pp: int, tp_shape, grid: MeshGrid) -> tuple[int, int]:
    if pp < 1:
        raise PlacementError("pp must be >= 1")
    bx, by = block_grid(tp_shape, grid)
    if bx * by < pp:
        raise PlacementError(
            f"{pp} stages of {tp_shape[0]}x{tp_shape[1]} dies do not tile a "
            f"{grid.grid_x}x{grid.grid_y} grid ({bx * by} blocks available)")
    return bx, by


def serpentine_placement(pp: int, tp_shape: tuple[int, int], grid: MeshGrid) -> PlacementMap:
    """Boustrophedon over block rows: left-to-right, then right-to-left."""
    bx, by = _check_capacity(pp, tp_shape, grid)
    order = []
    for j in range(by):
        xs = range(bx) if j % 2 == 0 else range(bx - 1, -1, -1)
        order.extend((i, j) for i in xs)
    return PlacementMap(grid.grid_x, grid.grid_y, tuple(tp_shape), tuple(order[:pp]), "serpentine")


# -- routing -----------------------------------------------------------------

def manhattan(a: Coord, b: Coord) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def xy_route(a: Coord, b: Coord) -> list[Coord]:
    """Dimension-ordered route: along x first, then y."""
    path = [a]
    x, y = a
    sx = 1 if b[0] > x else -1
    while x != b[0]:
        x += sx
        path.append((x, y))
    sy = 1 if b[1] > y else -1
    while y != b[1]:
        y += sy
        path.append((x, y))
    return path


def path_links(path: Sequence[Coord]) -> list[Link]:
    return [link(u, v) for u, v in zip(path, path[1:])]


def min_cost_monotone_path(a: Coord, b: Coord, cost) -> tuple[float, list[Coord]]:
    """Cheapest shortest path from ``a`` to ``b``; ``cost(u, v)`` prices a hop.

    DP over the monotone lattice; ties prefer the x-step (XY order).
    """
    sx = 1 if b[0] >= a[0] else -1
    sy = 1 if b[1] >= a[1] else -1
    dx, dy = abs(b[0] - a[0]), abs(b[1] - a[1])
    xs = [a[0] + sx * i for i in range(dx + 1)]
    ys = [a[1] + sy * j for j in range(dy + 1)]
    best = [[0.0] * (dy + 1) for _ in range(dx + 1)]
    from_x = [[False] * (dy + 1) for _ in range(dx + 1)]
    for i in range(dx + 1):
        row, prev_row = best[i], best[i - 1] if i else None
        for j in range(dy + 1):
            if i == 0 and j == 0:
                continue
            here = (xs[i], ys[j])
            vx = prev_row[j] + cost((xs[i - 1], ys[j]), here) if i else math.inf
            vy = row[j - 1] + cost((xs[i], ys[j - 1]), here) if j else math.inf
            if vx <= vy:
                row[j], from_x[i][j] = vx, True
            else:
                row[j] = vy
    i, j, path = dx, dy, []
    while True:
        path.append((xs[i], ys[j]))
        if i == 0 and j == 0:
            break
        if from_x[i][j]:
            i -= 1
        else:
            j -= 1
    path.reverse()
    return best[dx][dy], path


@dataclass(frozen=True)
class PairRoute:
    sender: int
    helper: int
    nbytes: float
    path: tuple[Coord, ...]
    gamma: int

    @property
    def hops(self) -> int:
        return len(self.path) - 1


@dataclass(frozen=True)
class RoutedPaths:
    pipeline: tuple[tuple[Coord, ...], ...]
    pairs: tuple[PairRoute, ...]

    def pipeline_links(self) -> set[Link]:
        return {l for p in self.pipeline for l in path_links(p)}

    @property
    def pipeline_hops(self) -> int:
        return sum(len(p) - 1 for p in self.pipeline)

    @property
    def pair_hops(self) -> int:
        return sum(r.hops for r in self.pairs)

    @property
    def total_hops(self) -> int:
        return self.pipeline_hops + self.pair_hops

    @property
    def avg_pair_hops(self) -> float:
        return self.pair_hops / len(self.pairs) if self.pairs else 0.0


@dataclass(frozen=True)
class CostResult:
    cost: float
    paths: RoutedPaths


def _pp_bytes(comm_pp, pp: int) -> list[float]:
    if isinstance(comm_pp, (int, float)):
        return [float(comm_pp)] * (pp - 1)
    comm_pp = list(comm_pp)
    if len(comm_pp) != pp - 1:
        raise PlacementError(f"expected {pp - 1} pipeline boundary loads, got {len(comm_pp)}")
    return comm_pp


def as_pair(p) -> tuple[int, int, float]:
    if hasattr(p, "sender"):
        return p.sender, p.helper, float(getattr(p, "offload", getattr(p, "amount", 0)))
    s, h, b = p
    return int(s), int(h), float(b)


def route_pair(a: Coord, b: Coord, busy: set[Link]) -> tuple[list[Coord], int]:
    """Shortest path minimising shared links with ``busy``; returns (path, gamma)."""
    gamma, path = min_cost_monotone_path(a, b, lambda u, v: 1.0 if link(u, v) in busy else 0.0)
    return path, int(round(gamma))


def global_cost(placement: PlacementMap, comm_pp, pairs: Iterable = ()) -> CostResult:
    """Sum of Dist * Comm_PP over boundaries plus Dist * Comm_pair * (1 + gamma)
    over (sender, helper, bytes) pairs."""
    pp = placement.pp
    loads = _pp_bytes(comm_pp, pp)
    centers = [r.center for r in placement.regions]
    pipeline = tuple(tuple(xy_route(centers[i], centers[i + 1])) for i in range(pp - 1))
    cost = sum(manhattan(centers[i], centers[i + 1]) * loads[i] for i in range(pp - 1))
    busy = {l for p in pipeline for l in path_links(p)}
    routed = []
    for raw in pairs:
        s, h, nbytes = as_pair(raw)
        if not (0 <= s < pp and 0 <= h < pp):
            raise PlacementError(f"pair ({s}, {h}) references an unplaced stage")
        path, gamma = route_pair(centers[s], centers[h], busy)
        routed.append(PairRoute(s, h, nbytes, tuple(path), gamma))
        cost += manhattan(centers[s], centers[h]) * nbytes * (1 + gamma)
    return CostResult(float(cost), RoutedPaths(pipeline, tuple(routed)))


# -- location-aware search ---------------------------------------------------

@dataclass
class _Search:
    placement_template: PlacementMap
    loads: list[float]
    pairs: list[tuple[int, int, float]]
    bx: int
    by: int
    best_cost: float = math.inf
    best: tuple | None = None
    nodes: int = 0
    exhausted: bool = False
    pair_at: dict = field(default_factory=dict)


def _cost_of(template: PlacementMap, blocks, loads, pairs) -> float:
    return global_cost(replace(template, blocks=tuple(blocks)), loads, pairs).cost


def location_aware_placement(pp: int, tp_shape: tuple[int, int], grid: MeshGrid,
                             pairs: Sequence = (), comm_pp=1.0, *, seed: int = 0,
                             anneal_steps: int = 20_000,
                             exhaustive_max_pp: int = EXHAUSTIVE_MAX_PP) -> PlacementMap:
    """Adjacency-preserving placement minimising GlobalCost.

    Exhaustive branch-and-bound over simple block paths for ``pp`` up to the
    threshold (seeded with the serpentine); simulated annealing above it.
    The returned ``method`` records which search produced the result.
    """
    seed_map = serpentine_placement(pp, tp_shape, grid)
    loads = _pp_bytes(comm_pp, pp)
    pairs = [as_pair(p) for p in pairs]
    bx, by = block_grid(tp_shape, grid)
    seed_blocks = seed_map.blocks
    if not seed_map.is_adjacent_chain():
        # a partially filled last block row can break the snake; fall back to the serpentine
        return seed_map
    if pp <= exhaustive_max_pp:
        blocks, complete = _branch_and_bound(seed_map, loads, pairs, bx, by)
        method = "exhaustive" if complete else "exhaustive-truncated"
    else:
        blocks = _anneal(seed_map, loads, pairs, bx, by, seed, anneal_steps)
        method = "annealing"
    if _cost_of(seed_map, blocks, loads, pairs) >= _cost_of(seed_map, seed_blocks, loads, pairs):
        blocks = seed_blocks
    return replace(seed_map, blocks=tuple(blocks), method=method)


def _branch_and_bound(seed_map: PlacementMap, loads, pairs, bx, by):
    rows, cols = seed_map.tp_shape
    pp = seed_map.pp
    step_min = min(rows if by > 1 else math.inf, cols if bx > 1 else math.inf)
    if step_min == math.inf:
        step_min = 0
    suffix = [0.0] * (pp + 1)
    for i in range(pp - 2, -1, -1):
        suffix[i] = suffix[i + 1] + loads[i] * step_min
    by_late = {}
    for s, h, b in pairs:
        by_late.setdefault(max(s, h), []).append((min(s, h), b))

    st = _Search(seed_map, loads, pairs, bx, by)
    st.best = tuple(seed_map.blocks)
    st.best_cost = _cost_of(seed_map, seed_map.blocks, loads, pairs)

    def center(b):
        return (b[0] * cols + (cols - 1) // 2, b[1] * rows + (rows - 1) // 2)

    # cannot beat the lower bound for the seed itself: pairs at one block step
    floor = sum(loads) * step_min + sum(b * step_min for _, _, b in pairs)
    if st.best_cost <= floor:
        return st.best, True

    path: list[Coord] = []
    used: set[Coord] = set()

    def dfs(partial: float):
        st.nodes += 1
        if st.nodes > DFS_NODE_BUDGET:
            st.exhausted = True
            return
        k = len(path)
        if k == pp:
            cost = _cost_of(seed_map, path, loads, pairs)
            if cost < st.best_cost:
                st.best_cost, st.best = cost, tuple(path)
            return
        cands = ([(i, j) for j in range(by) for i in range(bx)] if k == 0 else
                 [n for n in ((path[-1][0] + 1, path[-1][1]), (path[-1][0] - 1, path[-1][1]),
                              (path[-1][0], path[-1][1] + 1), (path[-1][0], path[-1][1] - 1))
                  if 0 <= n[0] < bx and 0 <= n[1] < by])
        for c in cands:
            if c in used:
                continue
            add = 0.0
            if k > 0:
                add += manhattan(center(path[-1]), center(c)) * loads[k - 1]
            for other, b in by_late.get(k, ()):
                add += manhattan(center(path[other]), center(c)) * b
            bound = partial + add + suffix[k]
            pending = sum(b * step_min for s, h, b in pairs if max(s, h) > k)
            if bound + pending >= st.best_cost:
                continue
            path.append(c)
            used.add(c)
            dfs(partial + add)
            path.pop()
            used.discard(c)
            if st.exhausted:
                return

    dfs(0.0)
    return st.best, not st.exhausted


def _anneal(seed_map: PlacementMap, loads, pairs, bx, by, seed: int, steps: int):
    rng = random.Random(f"anneal:{seed}")
    cur = list(seed_map.blocks)
    cur_cost = _cost_of(seed_map, cur, loads, pairs)
    best, best_cost = list(cur), cur_cost
    t0 = max(cur_cost, 1.0) * 0.05

    def inside(c):
        return 0 <= c[0] < bx and 0 <= c[1] < by

    def nbrs(c):
        return [n for n in ((c[0] + 1, c[1]), (c[0] - 1, c[1]), (c[0], c[1] + 1), (c[0], c[1] - 1))
                if inside(n)]

    for step in range(steps):
        temp = t0 * (1.0 - step / steps) + 1e-12
        move = rng.randrange(3)
        cand = list(cur)
        if move == 0:
            cand.reverse()
        elif move == 1:
            # slither: drop one end, grow the other into a free neighbour
            if rng.random() < 0.5:
                cand.reverse()
            occupied = set(cand[1:])
            free = [n for n in nbrs(cand[-1]) if n not in occupied]
            if not free:
                continue
            cand = cand[1:] + [rng.choice(free)]
        else:
            # backbite: connect the tail to an earlier vertex and reverse the loop
            if rng.random() < 0.5:
                cand.reverse()
            pos = {c: i for i, c in enumerate(cand)}
            options = [pos[n] for n in nbrs(cand[-1]) if n in pos and pos[n] < len(cand) - 2]
            if not options:
                continue
            k = rng.choice(options)
            cand = cand[:k + 1] + cand[k + 1:][::-1]
        cost = _cost_of(seed_map, cand, loads, pairs)
        if cost <= cur_cost or rng.random() < math.exp(-(cost - cur_cost) / temp):
            cur, cur_cost = cand, cost
            if cost < best_cost:
                best, best_cost = list(cand), cost
    return best
