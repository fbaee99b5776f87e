"""Compare serpentine and location-aware placement on an 8-stage, two-pair instance."""
from waferdse.placement import MeshGrid, global_cost, location_aware_placement, serpentine_placement

PAIRS = [(0, 7, 1.0), (1, 6, 1.0)]


def main():
    grid = MeshGrid(4, 8)
    ser = serpentine_placement(8, (2, 2), grid)
    loc = location_aware_placement(8, (2, 2), grid, PAIRS, 1.0)
    totals = []
    for name, pm in (("serpentine", ser), ("location-aware", loc)):
        paths = global_cost(pm, 1.0, PAIRS).paths
        total = paths.pipeline_hops + paths.pair_hops
        totals.append(total)
        print(f"{name}: pipeline {paths.pipeline_hops} hops, pairs {paths.pair_hops} hops "
              f"(avg {paths.avg_pair_hops:g}), total {total}")
        print(pm.to_grid_text())
        print()
    print(f"total hop reduction: {100 * (totals[0] - totals[1]) / totals[0]:.1f}%")


if __name__ == "__main__":
    main()
