"""Propagator decay checks: fitted versus predicted rates, one CSV per mode."""
import argparse
from pathlib import Path

from quench.linops import verify_decay


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--output-dir", default="decay")
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--p", type=float, default=-1.0)
    args = ap.parse_args()
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = [("P2-plain", 0.0, {}), ("P1-weighted-k", 0.0, {}), ("P1-weighted-k", 0.5, {}),
            ("P1-weighted-k", 1.0, {}), ("P3-full", 0.0, {"beta": 0.05})]
    for mode, k, kw in runs:
        rep = verify_decay(mode, args.alpha, args.p, k, **kw)
        rep.to_csv(out / f"{mode}_k{k:g}.csv", [f"mode={mode}", f"k={k}", f"p={args.p}"])
        if mode == "P3-full":
            print(f"{mode}: fitted c0 = {rep.c0:.4f}")
        else:
            print(f"{mode} k={k:g}: worst fitted {rep.worst:.4f}, predicted {rep.predicted:.4f}, "
                  f"{'ok' if rep.passes() else 'FAIL'}")


if __name__ == "__main__":
    main()
