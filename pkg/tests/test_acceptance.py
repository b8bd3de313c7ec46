"""Acceptance criteria, each run at its stated tolerance and runtime budget.

One PASS/FAIL line per criterion is printed in the terminal summary.
"""
import csv
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from quench.cli import (RunConfig, cmd_sweep, run_rescaled_pipeline, suite_spectral,
                        suite_splitting)
from quench.diagnostics import majorants, remainder_check
from quench.direct_solver import DirectConfig, duhamel_iterate, run_to_quench
from quench.grid import Grid, GridFunction


def b_log_target(p):
    return (p - 1) ** 2 / (4 * p)


def report(label, ok, detail):
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
    return ok


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def checks_ok(checks):
    return all(c.passed for c in checks)


def worst(checks):
    return "; ".join(f"{c.name}={c.value:.2e}" for c in checks)


# -- 1-5: oracle and property suites --------------------------------------------

def test_criterion_1_homogeneous_oracle():
    g = Grid(20.0, 801)
    u0 = GridFunction(g, np.ones(g.n_points), even=True)
    tr, dt = timed(run_to_quench, u0, DirectConfig(p=-1.0, stop_floor=0.05, dt_max=1e-3))
    t = np.asarray(tr.times)
    exact = np.sqrt(np.clip(1.0 - 2.0 * t, 0.0, None))
    rel = float(np.max(np.abs(np.asarray(tr.u_min) - exact) / exact))
    err_t = abs(tr.quench_estimate.t_star - 0.5)
    ok = rel <= 1e-4 and min(tr.u_min) <= 0.05 + 1e-12 and err_t <= 1e-4 and dt < 10
    assert report("1 homogeneous oracle", ok,
                  f"rel err {rel:.2e}, |t*-0.5| {err_t:.2e}, {dt:.1f}s")


def test_criterion_2_duhamel_cross_validation():
    def run():
        g = Grid(20.0, 801)
        x = g.nodes
        ub = GridFunction(g, 1.0 + 0.3 * np.exp(-x * x), even=True)
        d = duhamel_iterate(ub, 0.05, 20, 8, -1.0).values
        imex = run_to_quench(ub, DirectConfig(p=-1.0, dt_max=1e-4, record_times=(0.05,),
                                              t_max=0.05))
        ref = imex.snapshot_at(0.05).values
        return float(np.max(np.abs(d - ref)) / np.max(np.abs(ref)))
    rel, dt = timed(run)
    assert report("2 Duhamel vs IMEX at t=0.05", rel <= 1e-3 and dt < 30,
                  f"sup rel {rel:.2e}, {dt:.1f}s")


def test_criterion_3_spectral_suite():
    checks, dt = timed(suite_spectral, RunConfig())
    core = [c for c in checks if not c.name.startswith("decay")]
    assert report("3 spectral suite", checks_ok(core) and dt < 30, f"{worst(core)}, {dt:.1f}s")


def test_criterion_4_propagator_decay():
    checks, dt = timed(suite_spectral, RunConfig())
    decay = [c for c in checks if c.name.startswith("decay")]
    assert len(decay) == 5
    assert report("4 propagator decay", checks_ok(decay) and dt < 120, f"{worst(decay)}, {dt:.1f}s")


def test_criterion_5_splitting_suite():
    checks, dt = timed(suite_splitting, RunConfig())
    assert len(checks) == 6
    assert report("5 splitting suite", checks_ok(checks) and dt < 60, f"{worst(checks)}, {dt:.1f}s")


# -- 6: quench campaign -------------------------------------------------------------

CAMPAIGN = RunConfig(p=-1.0, b0=0.05, tau_max=30.0)


@pytest.fixture(scope="module")
def campaign(tmp_path_factory):
    out, t0 = {}, time.perf_counter()
    for d in (0.0, 0.1):
        cfg = replace(CAMPAIGN, delta0=d, output_dir=str(tmp_path_factory.mktemp(f"d{d}")))
        out[d] = run_rescaled_pipeline(cfg)
    out["runtime"] = time.perf_counter() - t0
    return out


DELTAS = (0.0, 0.1)


def test_criterion_6_runtime(campaign):
    dt = campaign["runtime"]
    assert report("6 campaign runtime", dt < 600, f"{dt:.0f}s for both runs")


@pytest.mark.parametrize("delta0", DELTAS)
def test_criterion_6a_lambda_exponent(campaign, delta0):
    e = campaign[delta0]["fit"]["lambda_exponent"]
    assert report(f"6(a) delta0={delta0} lambda exponent", abs(e - 0.5) <= 0.02, f"{e:.4f}")


@pytest.mark.parametrize("delta0", DELTAS)
def test_criterion_6b_b_log_limit(campaign, delta0):
    fit = campaign[delta0]["fit"]
    c, target = fit["b_log_limit"], fit["b_log_target"]
    assert report(f"6(b) delta0={delta0} b ln|t*-t| limit", abs(c / target - 1) <= 0.25,
                  f"{c:.4f} vs {target:.4f}")


@pytest.mark.parametrize("delta0", DELTAS)
def test_criterion_6b_b_log_window_mean(campaign, delta0):
    fit = campaign[delta0]["fit"]
    c, target = fit["b_log_constant"], fit["b_log_target"]
    assert report(f"6(b) delta0={delta0} b ln|t*-t| trailing-window mean",
                  abs(c / target - 1) <= 0.25, f"{c:.4f} vs {target:.4f}")


@pytest.mark.parametrize("delta0", DELTAS)
def test_criterion_6c_c_limit(campaign, delta0):
    c = campaign[delta0]["fit"]["c_limit"]
    assert report(f"6(c) delta0={delta0} c limit", abs(c - 0.5) <= 0.02, f"{c:.4f}")


@pytest.mark.parametrize("delta0", DELTAS)
def test_criterion_6d_remainder(campaign, delta0):
    s = campaign[delta0]
    assert report(f"6(d) delta0={delta0} remainder check", s["remainder_pass"],
                  f"max ratio {s['remainder_max_ratio']:.3f}")


@pytest.mark.parametrize("delta0", DELTAS)
def test_criterion_6e_comparison(campaign, delta0):
    slack = campaign[delta0]["comparison_slack"]
    assert report(f"6(e) delta0={delta0} comparison slack", slack >= -1e-6, f"{slack:.4f}")


@pytest.mark.parametrize("delta0", DELTAS)
def test_criterion_6f_no_divergence(campaign, delta0):
    mon = campaign[delta0]["monitor"]
    names = ("B_bound", "A_bound", "M1_bound", "M2_bound", "Mq_bound")
    assert all(n in mon for n in names)
    ok = all(mon[n]["bounded"] for n in names) and not mon["diverging"]
    detail = ", ".join(f"{n} {mon[n]['max']:.3g}" for n in names if "max" in mon[n])
    assert report(f"6(f) delta0={delta0} a priori monitors", ok, detail)


# -- 7: sweep -------------------------------------------------------------------------

SWEEP_GRID = {"p": [-0.5, -1.0, -2.0, -3.0], "b0": [0.02, 0.05]}


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    code, dt = timed(cmd_sweep, replace(CAMPAIGN, output_dir=str(out)), SWEEP_GRID)
    with open(out / "sweep.csv") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    return code, rows, dt


def _f(x):
    return float(x) if x not in ("", None) else math.nan


def test_criterion_7_sweep_limit(sweep):
    code, rows, dt = sweep
    assert len(rows) == 8
    bad = []
    for r in rows:
        p = _f(r["p"])
        target = b_log_target(p)
        ok = (r["status"] == "ok"
              and abs(_f(r["b_log_limit"]) / target - 1) <= 0.30
              and abs(_f(r["lambda_exponent"]) - 0.5) <= 0.02
              and abs(_f(r["c_limit"]) - 0.5) <= 0.02
              and r["diverging"] == "False"
              and (p >= -1 or math.isfinite(_f(r["Mq"]))))
        if not ok:
            bad.append(r["cell"])
    assert report("7 sweep (log-law limit)", code == 0 and not bad and dt < 2700,
                  f"failing cells {bad or 'none'}, {dt:.0f}s")


def test_criterion_7_sweep_window_mean(sweep):
    _, rows, _ = sweep
    errs = [abs(_f(r["b_log_constant"]) / b_log_target(_f(r["p"])) - 1) for r in rows]
    assert report("7 sweep (trailing-window mean)", max(errs) <= 0.30,
                  f"worst relative error {max(errs):.2f}")


# -- 8: negative controls ---------------------------------------------------------------

def test_criterion_8_large_perturbation(tmp_path):
    cfg = replace(CAMPAIGN, delta0=1.0, perturbation_id="gaussian-bump", output_dir=str(tmp_path))
    s = run_rescaled_pipeline(cfg)
    ok = s["status"] == "aborted" or s["monitor"]["diverging"]
    assert report("8 delta0=1 control", ok, f"status {s['status']}")


def test_criterion_8_b2_envelope(tmp_path):
    from quench.cli import rescaled_initial_data
    from quench.model import normalized_profile_params
    from quench.rescaled_solver import RescaledConfig, evolve_rescaled
    cfg = replace(CAMPAIGN, delta0=0.1)
    v0, nd = rescaled_initial_data(cfg)
    mu = normalized_profile_params(nd.beta, cfg.p)
    trace = evolve_rescaled(v0, RescaledConfig(p=cfg.p, tau_max=cfg.tau_max,
                                               sample_stride=cfg.sample_stride), mu.a, mu.b)
    ok, ratio = remainder_check(majorants(trace, cfg.p), envelope_power=2.0)
    assert report("8 b^2 envelope control fails remainder check", not ok,
                  f"remainder check {'passed' if ok else 'failed'}, max ratio {ratio:.3f}")
