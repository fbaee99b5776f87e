"""Print the GA best-fitness trace for a small memory-constrained candidate."""
import argparse
import time

from waferdse.engines import TpSplit
from waferdse.hw_model import CoreSpec, DieSpec, DramChipletSpec, WaferConfig
from waferdse.search import GaParams, SearchKnobs, build_problem, ga_optimize, greedy_seed
from waferdse.workload import ModelConfig, TrainingWorkload


def instance():
    die = DieSpec(20.0, 20.0, 4, 4, CoreSpec(1.0e12, 1 << 20), 12e12, 0.25, "toy")
    dram = DramChipletSpec(2.0, 5.0, 0.05e9, 2e11, "m")
    wafer = WaferConfig(4, 4, die, 2, dram, 1e12, name="toy")
    wl = TrainingWorkload(ModelConfig("tiny", 8, 512, 8, 512, 1000), 2, 16)
    return build_problem(wafer, wl, 2, 4, TpSplit((1, 2), (("H", 2),)), SearchKnobs(quantum=2 ** 20))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--population", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--omega", type=float, default=0.5)
    args = ap.parse_args()
    p = instance()
    g0 = greedy_seed(p)
    t = time.perf_counter()
    r = ga_optimize(p, g0, GaParams(population=args.population, steps=args.steps,
                                    omega=args.omega, seed=args.seed))
    dt = time.perf_counter() - t
    print("step,best_fitness")
    for i, f in enumerate(r.trace):
        print(f"{i},{f:.6f}")
    print(f"# {args.steps} steps in {dt:.3f} s, fitness {r.seed_fitness:.4f} -> {r.fitness:.4f}")


if __name__ == "__main__":
    main()
