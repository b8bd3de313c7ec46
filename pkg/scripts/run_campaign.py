"""Quench campaign at p = -1, b0 = 0.05 with delta0 in {0, 0.1}; prints the fitted laws."""
import argparse
import json
from dataclasses import replace
from pathlib import Path

from quench.cli import RunConfig, run_rescaled_pipeline


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--output-dir", default="campaign")
    ap.add_argument("--tau-max", type=float, default=30.0)
    args = ap.parse_args()
    base = RunConfig(p=-1.0, b0=0.05, tau_max=args.tau_max)
    for d in (0.0, 0.1):
        cfg = replace(base, delta0=d, output_dir=str(Path(args.output_dir) / f"delta0_{d:g}"))
        s = run_rescaled_pipeline(cfg)
        fit = s["fit"]
        print(json.dumps({"delta0": d, "status": s["status"],
                          "lambda_exponent": fit.get("lambda_exponent"),
                          "b_log_limit": fit.get("b_log_limit"),
                          "b_log_constant": fit.get("b_log_constant"),
                          "b_log_target": fit.get("b_log_target"),
                          "c_limit": fit.get("c_limit"), "t_star": fit.get("t_star"),
                          "comparison_slack": s["comparison_slack"],
                          "remainder_max_ratio": s["remainder_max_ratio"]}))


if __name__ == "__main__":
    main()
