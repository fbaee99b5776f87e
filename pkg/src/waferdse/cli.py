"""``waferdse`` command line: enumerate, evaluate, search, report.

Exit codes: 0 success, 2 schema or usage error, 3 infeasible or exhausted,
4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import traceback
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import (SpecError, hardware_from_spec, knobs_from_spec, load_spec, selected_wafers,
                     split_from_spec, validate_report, wafer_to_dict, workload_from_spec)
from .cost_model import PerfTable, build_perf_table, content_hash, hw_key
from .dram_alloc import EMPTY, AllocationInfeasible
from .engines import (CapacityError, analytic_baseline, candidate_splits, evaluate_iteration,
                      sharded_ops)
from .gcmr import GcmrInfeasible, PairingInfeasible
from .hw_model import WaferConfig, enumerate_wafer_configs, validate_config
from .pipeline import ScheduleError
from .placement import PlacementError, serpentine_placement
from .search import (CandidateResult, Genome, SearchKnobs, build_problem, evaluate_candidate,
                     search_parallelism, tp_options)
from .workload import TrainingWorkload

log = logging.getLogger("waferdse")

EXIT_OK, EXIT_SCHEMA, EXIT_INFEASIBLE, EXIT_INTERNAL = 0, 2, 3, 4
INFEASIBLE_ERRORS = (CapacityError, GcmrInfeasible, PairingInfeasible, PlacementError,
                     AllocationInfeasible, ScheduleError)

RESULT_COLUMNS = ("rank", "config", "dies", "total_dram_gb", "tp", "pp", "split",
                  "throughput_tflops", "iteration_time_s", "t_max_s", "global_cost",
                  "tmax_x_cost", "recompute_fraction", "compute_utilization",
                  "dram_bandwidth_utilization", "link_utilization", "throughput_rank",
                  "baseline_load_flop", "baseline_rank")


# -- output helpers ------------------------------------------------------------

def dump_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x):
    return f"{x:.9g}" if isinstance(x, float) else x


def write_heatmap(path: Path, heatmap):
    _write_csv(path, ["y"] + [f"x{x}" for x in range(len(heatmap[0]) if heatmap else 0)],
               [[y] + [_fmt(v) for v in row] for y, row in enumerate(heatmap)])


def _envelope(command: str, spec: dict, overrides: dict) -> dict:
    return {"tool": "waferdse", "version": __version__, "command": command,
            "input_hash": content_hash({"spec": spec, "overrides": overrides}),
            "spec": spec, "status": "ok"}


# -- perf-table cache -------------------------------------------------------

def perf_table_for(wafer: WaferConfig, workload: TrainingWorkload, knobs: SearchKnobs,
                   cache_dir: Path | None, tps=None) -> PerfTable:
    """Lookup table over every sharded operator the search can visit.

    Tables are cached as JSON under ``cache_dir`` keyed by a content hash of
    the die, DRAM bandwidth, utilisation and operator shapes, so a rerun
    (or a resumed one) skips the cost model entirely.
    """
    tps = tps or sorted({tp for mp in range(1, wafer.num_dies + 1) for tp in tp_options(mp)})
    ops = {}
    for tp in tps:
        for split in candidate_splits(tp, workload.microbatch_size, wafer.grid_x, wafer.grid_y):
            for op in sharded_ops(workload.graph, split):
                ops[(op.kind, op.shape)] = op
    ordered = [ops[k] for k in sorted(ops)]
    bw = wafer.dram_bandwidth_per_die
    key = content_hash({"hw": hw_key(wafer.die, bw, knobs.utilization),
                        "ops": [[o.kind, list(o.shape), o.fwd_flops, o.bwd_flops] for o in ordered]})
    path = cache_dir / f"perf-{key}.json" if cache_dir else None
    if path is not None and path.exists():
        log.info("perf table cache hit %s", path.name)
        return PerfTable.from_json(path.read_text())
    table = build_perf_table(ordered, [(wafer.die, bw)], knobs.utilization)
    if path is not None:
        _write(path, table.to_json())
    return table


# -- commands ----------------------------------------------------------------

def _wafer_key(c: WaferConfig) -> tuple:
    return (c.grid_x, c.grid_y, c.die.name, c.dram.name, c.dram_chiplets_per_die, c.d2d_bandwidth)


def _with_preset_name(cfg: WaferConfig, presets: dict) -> WaferConfig:
    """Give an enumerated config the name and labels of a matching preset."""
    for name, w in sorted(presets.items()):
        if _wafer_key(w) == _wafer_key(cfg):
            return replace(cfg, name=name, labels=w.labels)
    return cfg


def cmd_enumerate(spec: dict, out: Path | None = None) -> tuple[dict, int]:
    hw = hardware_from_spec(spec)
    if hw.ranges is not None:
        configs = [_with_preset_name(c, hw.wafers) for c in
                   enumerate_wafer_configs(hw.ranges, hw.wafer_mm)]
    else:
        configs = [w for w in selected_wafers(hw) if validate_config(w)]
    doc = _envelope("enumerate", spec, {})
    doc["configs"] = [wafer_to_dict(c) for c in configs]
    if out is not None:
        _write(out / "configs.json", dump_json(doc))
        cols = ["name", "grid_x", "grid_y", "dies", "die", "die_tflops", "dram", "dram_chiplets",
                "dram_per_die_gb", "total_dram_gb", "d2d_bandwidth"]
        _write_csv(out / "configs.csv", cols,
                   [[d["name"], d["grid"][0], d["grid"][1], d["dies"], d["die"], _fmt(d["die_tflops"]),
                     d["dram"], d["dram_chiplets"], _fmt(d["dram_per_die_gb"]),
                     _fmt(d["total_dram_gb"]), _fmt(d["d2d_bandwidth"])] for d in doc["configs"]])
    return validate_report(doc), EXIT_OK


def _single_wafer(spec: dict) -> WaferConfig:
    hw = hardware_from_spec(spec)
    wafers = selected_wafers(hw)
    if len(wafers) != 1:
        raise SpecError(f"hardware.use: evaluate needs exactly one wafer, got {len(wafers)}")
    return wafers[0]


def _candidate_dict(wafer, res) -> dict:
    rc = res.problem.recomp_config(res.genome)
    d = {"wafer": wafer_to_dict(wafer), "tp": res.tp, "pp": res.pp, "split": res.split.to_dict(),
         "recompute": rc.to_dict(), "placement": res.genome.placement.to_dict(),
         "allocation": res.genome.allocation.to_dict(), "evaluation": res.report.to_dict(),
         "heatmap": [list(r) for r in res.report.heatmap],
         "global_cost": res.problem.global_cost(res.genome), "fitness": res.fitness}
    if res.ga is not None:
        d["ga"] = {"trace": list(res.ga.trace), "fitness": res.ga.fitness,
                   "seed_fitness": res.ga.seed_fitness, "t_max": res.ga.t_max,
                   "global_cost": res.ga.global_cost}
    return d


def _write_candidate_artifacts(out: Path, stem: str, res):
    write_heatmap(out / f"heatmap_{stem}.csv", res.report.heatmap)
    if res.report.timeline is not None:
        _write(out / f"trace_{stem}.json", res.report.timeline.to_chrome_trace() + "\n")
    _write(out / f"placement_{stem}.txt", res.genome.placement.to_grid_text() + "\n")


def cmd_evaluate(spec: dict, out: Path | None = None, overrides: dict | None = None,
                 cache_dir: Path | None = None) -> tuple[dict, int]:
    overrides = overrides or {}
    wafer = _single_wafer(spec)
    workload = workload_from_spec(spec)
    knobs = knobs_from_spec(spec, overrides)
    tp, pp, split, mode = split_from_spec(spec)
    doc = _envelope("evaluate", spec, overrides)
    try:
        if mode == "none":
            # every checkpoint stored, serpentine layout, no offload
            problem = build_problem(wafer, workload, tp, pp, split, knobs)
            stored = tuple(frozenset(problem.op_names) for _ in range(pp))
            placement = serpentine_placement(pp, split.shape, problem.grid)
            genome = Genome(stored, placement, EMPTY)
            report = evaluate_iteration(wafer, workload, tp, pp, split, problem.recomp_config(genome),
                                        placement, EMPTY, None, knobs.utilization, knobs.punishment)
            res = CandidateResult(tp, pp, split, problem, genome, report)
        else:
            table = perf_table_for(wafer, workload, knobs, cache_dir, [tp])
            res = evaluate_candidate(wafer, workload, tp, pp, split, knobs, table,
                                     run_ga=not knobs.fast)
    except INFEASIBLE_ERRORS as e:
        doc["status"] = "infeasible"
        doc["error"] = f"{type(e).__name__}: {e}"
        if out is not None:
            _write(out / "report.json", dump_json(doc))
        return validate_report(doc), EXIT_INFEASIBLE
    doc["results"] = [_candidate_dict(wafer, res)]
    if out is not None:
        _write(out / "report.json", dump_json(doc))
        _write_candidate_artifacts(out, wafer.name or "wafer", res)
    return validate_report(doc), EXIT_OK


def rank(values, reverse=False) -> list[int]:
    """1-based ranks; ties broken by position."""
    order = sorted(range(len(values)), key=lambda i: (-values[i] if reverse else values[i], i))
    out = [0] * len(values)
    for r, i in enumerate(order, 1):
        out[i] = r
    return out


def cmd_search(spec: dict, out: Path | None = None, overrides: dict | None = None,
               threads: int = 1, cache_dir: Path | None = None) -> tuple[dict, int]:
    overrides = overrides or {}
    hw = hardware_from_spec(spec)
    wafers = selected_wafers(hw)
    if hw.ranges is not None and not hw.use:
        wafers = enumerate_wafer_configs(hw.ranges, hw.wafer_mm)
    workload = workload_from_spec(spec)
    knobs = knobs_from_spec(spec, overrides)
    doc = _envelope("search", spec, overrides)
    results, ledgers, found = [], [], []
    for wafer in wafers:
        table = perf_table_for(wafer, workload, knobs, cache_dir)
        sr = search_parallelism(wafer, workload, knobs, table, threads)
        ledgers.append({"wafer": wafer.name, "fast": knobs.fast,
                        "entries": [e.to_dict() for e in sr.ledger]})
        if sr.best is None:
            results.append({"wafer": wafer_to_dict(wafer), "status": "exhausted"})
            continue
        d = _candidate_dict(wafer, sr.best)
        d["status"] = "ok"
        base = analytic_baseline(wafer, workload, sr.best.tp, sr.best.pp)
        d["baseline"] = {"comp": base.comp, "recomp": base.recomp, "access": base.access,
                         "comm": base.comm, "eta": base.eta, "cost": base.cost}
        d["tmax_x_cost"] = d["evaluation"]["t_max"] * d["global_cost"]
        results.append(d)
        found.append((wafer, sr.best, d))

    ok = [d for d in results if d["status"] == "ok"]
    ranks = rank([d["tmax_x_cost"] for d in ok])
    tranks = rank([d["evaluation"]["throughput"] for d in ok], reverse=True)
    branks = rank([d["baseline"]["cost"] for d in ok])
    for d, r, t, b in zip(ok, ranks, tranks, branks):
        d["rank"], d["throughput_rank"], d["baseline_rank"] = r, t, b
    doc["results"] = results
    doc["ledger"] = ledgers
    doc["status"] = "ok" if ok else "exhausted"

    if out is not None:
        rows = []
        for wafer, res, d in sorted(found, key=lambda x: x[2]["rank"]):
            ev = d["evaluation"]
            rows.append([d["rank"], wafer.name, wafer.num_dies, _fmt(wafer.total_dram_bytes / 1e9),
                         res.tp, res.pp, res.split.label, _fmt(ev["throughput"] / 1e12),
                         _fmt(ev["iteration_time"]), _fmt(ev["t_max"]), _fmt(d["global_cost"]),
                         _fmt(d["tmax_x_cost"]), _fmt(ev["recompute_fraction"]),
                         _fmt(ev["compute_utilization"]), _fmt(ev["dram_bandwidth_utilization"]),
                         _fmt(ev["link_utilization"]), d["throughput_rank"],
                         _fmt(d["baseline"]["cost"]), d["baseline_rank"]])
            _write_candidate_artifacts(out, wafer.name, res)
        _write_csv(out / "results.csv", RESULT_COLUMNS, rows)
        # ledgers are written for exhausted wafers too
        lcols = ["tp", "pp", "split", "disposition", "delegated", "throughput",
                 "iteration_time", "ga", "reason"]
        for led in ledgers:
            _write_csv(out / f"ledger_{led['wafer']}.csv", lcols,
                       [[_fmt(e[c]) for c in lcols] for e in led["entries"]])
    # the ledger is not part of REPORT_SCHEMA's core keys; keep it under results
    report = dict(doc)
    ledger = report.pop("ledger")
    for d, l in zip(report["results"], ledger):
        d["ledger"] = l
    if out is not None:
        _write(out / "report.json", dump_json(report))
    return validate_report(report), EXIT_OK if ok else EXIT_INFEASIBLE


def cmd_report(path: Path, out: Path | None = None) -> tuple[str, int]:
    """Summarise an existing report document as a text table."""
    doc = validate_report(json.loads(Path(path).read_text()))
    lines = [f"{doc['command']} report, waferdse {doc['version']}, input {doc['input_hash']}, "
             f"status {doc['status']}"]
    if doc.get("error"):
        lines.append(f"error: {doc['error']}")
    for c in doc.get("configs", []):
        lines.append(f"  {c['name']}: {c['grid'][0]}x{c['grid'][1]} {c['die']} "
                     f"{c['dram_per_die_gb']:g} GB/die, d2d {c['d2d_bandwidth']:.3g} B/s")
    for d in sorted(doc.get("results", []), key=lambda d: d.get("rank", 0)):
        if d.get("status") == "exhausted":
            lines.append(f"  {d['wafer']['name']}: exhausted")
            continue
        ev = d["evaluation"]
        head = f"  #{d['rank']} " if "rank" in d else "  "
        lines.append(f"{head}{d['wafer']['name']}: tp={d['tp']} pp={d['pp']} "
                     f"split={d['split']['label']} throughput={ev['throughput'] / 1e12:.2f} TFLOP/s "
                     f"iter={ev['iteration_time']:.4g}s recompute={ev['recompute_fraction']:.3f}")
    text = "\n".join(lines) + "\n"
    if out is not None:
        _write(out / "summary.txt", text)
    return text, EXIT_OK


# -- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="waferdse", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"waferdse {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("enumerate", "evaluate", "search"):
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, type=Path)
        s.add_argument("--out", type=Path)
        if name != "enumerate":
            s.add_argument("--seed", type=int)
            s.add_argument("--omega", type=float)
            s.add_argument("--steps", type=int)
            s.add_argument("--population", type=int)
            s.add_argument("--fast", action="store_true", default=None)
            s.add_argument("--threads", type=int, default=1)
            s.add_argument("--cache", type=Path, help="perf-table cache directory "
                           "(default: <out>/cache)")
    r = sub.add_parser("report")
    r.add_argument("report", type=Path)
    r.add_argument("--out", type=Path)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "report":
            text, code = cmd_report(args.report, args.out)
            sys.stdout.write(text)
            return code
        spec = load_spec(args.config)
        if args.command == "enumerate":
            doc, code = cmd_enumerate(spec, args.out)
        else:
            overrides = {k: getattr(args, k) for k in ("seed", "omega", "steps", "population", "fast")}
            overrides = {k: v for k, v in overrides.items() if v is not None}
            cache = args.cache or (args.out / "cache" if args.out else None)
            if args.command == "evaluate":
                doc, code = cmd_evaluate(spec, args.out, overrides, cache)
            else:
                doc, code = cmd_search(spec, args.out, overrides, args.threads, cache)
        if args.out is None:
            sys.stdout.write(dump_json(doc))
        if doc.get("error"):
            print(f"infeasible: {doc['error']}", file=sys.stderr)
        return code
    except SpecError as e:
        print(f"spec error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except (ValueError, KeyError) as e:
        # bad model or strategy values that survived the schema
        print(f"spec error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
