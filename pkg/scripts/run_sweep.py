"""Sweep p in {-0.5, -1, -2, -3} x b0 in {0.02, 0.05} and write sweep.csv."""
import argparse
import sys

from quench.cli import RunConfig, cmd_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--output-dir", default="sweep")
    ap.add_argument("--tau-max", type=float, default=30.0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    grid = {"p": [-0.5, -1.0, -2.0, -3.0], "b0": [0.02, 0.05]}
    cfg = RunConfig(tau_max=args.tau_max, output_dir=args.output_dir)
    return cmd_sweep(cfg, grid, args.workers)


if __name__ == "__main__":
    sys.exit(main())
