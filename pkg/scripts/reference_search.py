"""Run the full search over the four reference wafers and print the ranking."""
import argparse
import csv
import sys
from pathlib import Path

from waferdse.cli import main as cli_main
from waferdse.config import preset_path


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("out/reference"))
    ap.add_argument("--threads", type=int, default=8)
    ap.add_argument("--fast", action="store_true")
    args = ap.parse_args()
    argv = ["search", "--config", str(preset_path("reference_search.yaml")), "--out", str(args.out),
            "--threads", str(args.threads)]
    if args.fast:
        argv.append("--fast")
    code = cli_main(argv)
    if code:
        return code
    with (args.out / "results.csv").open() as f:
        rows = list(csv.DictReader(f))
    print(f"{'rank':>4} {'config':8} {'tp':>3} {'pp':>3} {'split':14} {'TFLOP/s':>9} "
          f"{'tmax*cost':>11} {'tput rank':>9} {'baseline':>8}")
    for r in rows:
        print(f"{r['rank']:>4} {r['config']:8} {r['tp']:>3} {r['pp']:>3} {r['split']:14} "
              f"{float(r['throughput_tflops']):9.1f} {float(r['tmax_x_cost']):11.4g} "
              f"{r['throughput_rank']:>9} {r['baseline_rank']:>8}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
