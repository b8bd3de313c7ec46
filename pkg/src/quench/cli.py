"""Command-line runner.

    quench simulate-direct   [--config FILE] [--p ...]
    quench simulate-rescaled [--config FILE] [...]
    quench verify SUITE      (spectral | splitting | heat | model)
    quench sweep --vary p=-0.5,-1 --vary b0=0.02,0.05

Exit codes: 0 ok, 1 invariant failure, 2 solver abort, 3 configuration error.
Every output file starts with a comment block holding the version and the
full configuration; nothing time-dependent is written, so equal configs
give byte-identical files.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import (comparison_check, fit_asymptotics, majorants, monitor_apriori,
                          remainder_check, write_majorant_csv, write_rescaled_csv)
from .direct_solver import DirectConfig, SolverAbort, duhamel_iterate, run_to_quench
from .grid import Grid, GridFunction, heat_convolve, inner_product
from .model import (PERTURBATIONS, InfeasibleInitialData, InitialDataSpec, ProfileParams,
                    beta_of_tau, check_initial_data, initial_data_fn, normalize_initial_data,
                    normalized_profile_params, q_exponent, quench_time_hom, u_hom, v_profile,
                    v_profile_dy)
from .rescaled_solver import RescaledAbort, RescaledConfig, evolve_rescaled

log = logging.getLogger("quench")

EXIT_OK, EXIT_INVARIANT, EXIT_ABORT, EXIT_CONFIG = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    p: float = -1.0
    b0: float = 0.05
    c0: float = 0.5
    delta0: float = 0.0
    perturbation_id: str = "hermite4-mode"
    lambda0: float = 1.0
    L: float = 40.0          # physical half-width
    N: int = 1601            # physical nodes
    L_y: float = 30.0        # rescaled half-width
    N_y: int = 1201          # rescaled nodes
    dtau: float = 1e-3
    tau_max: float = 30.0
    sample_stride: int = 50
    dt_safety: float = 0.1
    stop_floor: float = 0.0  # 0 selects 1e-3 * min u0
    output_dir: str = "out"
    seed: int = 0

    def validate(self) -> "RunConfig":
        checks = [
            (self.p < 0, f"p must be negative, got {self.p}"),
            (self.b0 >= 0, f"b0 must be >= 0, got {self.b0}"),
            (0.5 <= self.c0 <= 2.0, f"c0 must lie in [1/2, 2], got {self.c0}"),
            (self.delta0 >= 0, f"delta0 must be >= 0, got {self.delta0}"),
            (self.perturbation_id in PERTURBATIONS,
             f"perturbation_id must be one of {PERTURBATIONS}, got {self.perturbation_id!r}"),
            (self.lambda0 > 0, f"lambda0 must be positive, got {self.lambda0}"),
            (self.L > 0 and self.L_y > 0, "half-widths L and L_y must be positive"),
            (self.N >= 3 and self.N % 2 == 1, f"N must be odd and >= 3, got {self.N}"),
            (self.N_y >= 3 and self.N_y % 2 == 1, f"N_y must be odd and >= 3, got {self.N_y}"),
            (self.dtau > 0, f"dtau must be positive, got {self.dtau}"),
            (self.tau_max >= 0, f"tau_max must be >= 0, got {self.tau_max}"),
            (self.sample_stride >= 1, "sample_stride must be >= 1"),
            (0 < self.dt_safety <= 1, f"dt_safety must lie in (0, 1], got {self.dt_safety}"),
            (self.stop_floor >= 0, "stop_floor must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self

    @property
    def grid(self) -> Grid:
        return Grid(self.L, self.N)

    @property
    def y_grid(self) -> Grid:
        return Grid(self.L_y, self.N_y)

    @property
    def initial_spec(self) -> InitialDataSpec:
        return InitialDataSpec(self.b0, self.c0, self.delta0, self.perturbation_id, self.lambda0)

    def header(self) -> list[str]:
        return [f"quench {__version__}"] + [f"{k}={v}" for k, v in asdict(self).items()]


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(name: str, raw: str):
    kind = type(getattr(RunConfig(), name))
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return str(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kind.__name__}") from exc


def _key(name: str) -> str:
    key = name.strip().replace("-", "_")
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {name!r}")
    return key


def read_config_file(path) -> dict:
    """Flat key=value lines; '#' starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        key = _key(k)
        out[key] = _coerce(key, v.strip())
    return out


def build_config(args) -> RunConfig:
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    for name in _FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    return RunConfig(**values).validate()


# -- output helpers -------------------------------------------------------------

def _write_json(path: Path, payload: dict, cfg: RunConfig):
    doc = {"version": __version__, "config": asdict(cfg), **payload}
    path.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(float(x)) else None
    return x


def write_manifest(out: Path, cfg: RunConfig, exit_code: int):
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    entries = [{"path": str(p.relative_to(out)), "sha256": hashlib.sha256(p.read_bytes()).hexdigest()}
               for p in files]
    _write_json(out / "manifest.json", {"exit_code": exit_code, "files": entries}, cfg)


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- simulate-direct ------------------------------------------------------------

def cmd_simulate_direct(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    try:
        u0 = physical_initial_data(cfg)
    except InfeasibleInitialData as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    dcfg = DirectConfig(p=cfg.p, dt_safety=cfg.dt_safety,
                        stop_floor=cfg.stop_floor or None, sample_stride=10)
    code = EXIT_OK
    try:
        trace = run_to_quench(u0, dcfg)
    except SolverAbort as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        _write_json(out / "quench.json", {"aborted": str(exc)}, cfg)
        write_manifest(out, cfg, EXIT_ABORT)
        return EXIT_ABORT
    trace.to_csv(out / "direct_trace.csv", cfg.header())
    # a few fields are enough to see the profile collapse
    keep = sorted({0, len(trace.times) // 2, len(trace.times) - 1})
    for k in keep:
        trace.snapshots[k].to_csv(out / f"snapshot_{k}.csv", cfg.header() + [f"t={trace.times[k]!r}"])
    est = trace.quench_estimate
    payload = {"stop_reason": trace.stop_reason, "t_final": trace.times[-1],
               "u_min_final": trace.u_min[-1], "n_records": len(trace.times),
               "t_star": est.t_star if est else None,
               "fit_residual": est.residual if est else None,
               "low_confidence": est.low_confidence if est else True,
               "window": list(est.window) if est else None,
               "t_star_homogeneous_min": quench_time_hom(u0.min(), cfg.p)}
    _write_json(out / "quench.json", payload, cfg)
    write_manifest(out, cfg, code)
    return code


def physical_initial_data(cfg: RunConfig) -> GridFunction:
    spec = cfg.initial_spec
    fn = initial_data_fn(spec, cfg.p, cfg.grid)
    u0 = GridFunction(cfg.grid, fn(cfg.grid.nodes), even=True)
    rep = check_initial_data(u0, spec, cfg.p)
    bad = [k for k, v in rep.items() if k.startswith("weighted") and not v[2]]
    if bad or rep["lower_bound_slack"] < 0:
        raise InfeasibleInitialData(f"initial data violates {bad or 'the lower bound g'}")
    return u0


# -- simulate-rescaled ----------------------------------------------------------

def rescaled_initial_data(cfg: RunConfig):
    """Normalized data in the blow-up frame, v(y) = lambda0^{2/(p-1)} u1(lambda0 y).

    The normalized data u1 is sampled from the closed-form u0 at k0 lambda0 y,
    so no interpolation enters the initial state.
    """
    physical_initial_data(cfg)  # rejects infeasible specs
    fn = initial_data_fn(cfg.initial_spec, cfg.p, cfg.grid)
    lam = cfg.lambda0
    stretched = Grid(lam * cfg.L_y, cfg.N_y)
    nd = normalize_initial_data(fn, cfg.b0, cfg.c0, cfg.p, cfg.delta0, grid=stretched)
    vals = lam ** (2.0 / (cfg.p - 1.0)) * nd.u.values
    v0 = GridFunction(cfg.y_grid, vals, even=True)
    return v0, nd


def run_rescaled_pipeline(cfg: RunConfig, write: bool = True) -> dict:
    """Generate, normalize, evolve, diagnose; returns a summary dict (and writes files)."""
    out = _outdir(cfg) if write else None
    summary = {"status": "ok", "exit_code": EXIT_OK}
    v0, nd = rescaled_initial_data(cfg)
    mu = normalized_profile_params(nd.beta, cfg.p)
    rcfg = RescaledConfig(p=cfg.p, dtau=cfg.dtau, tau_max=cfg.tau_max,
                          sample_stride=cfg.sample_stride)
    try:
        trace = evolve_rescaled(v0, rcfg, mu.a, mu.b, lambda0=cfg.lambda0)
    except RescaledAbort as exc:
        trace = exc.trace
        last = exc.last_state.tau if exc.last_state is not None else 0.0
        summary.update(status="aborted", exit_code=EXIT_ABORT,
                       abort=f"left the splitting neighbourhood: {exc}", last_good_tau=last)
    summary["normalization"] = {"k0": nd.k0, "beta": nd.beta, "delta1": nd.delta1}
    mt = majorants(trace, cfg.p)
    c_norm = 0.5 - nd.beta / (1.0 - cfg.p)  # 2c + 2beta/(1-p) = 1 after normalization
    if trace.records:
        mon = monitor_apriori(mt)
        slack = comparison_check(trace, nd.beta, c_norm, cfg.p)
        rem_ok, rem_max = remainder_check(mt)
        fit = fit_asymptotics(trace)
    else:
        mon, slack, rem_ok, rem_max, fit = {"diverging": False}, math.inf, True, 0.0, None
    summary.update(
        monitor=mon, comparison_slack=slack, remainder_pass=rem_ok, remainder_max_ratio=rem_max,
        fit=json.loads(fit.to_json()) if fit is not None else {},
        M1_final=float(mt.M1[-1]) if len(mt.M1) else None,
        Mq_final=float(mt.Mq[-1]) if cfg.p < -1 and len(mt.Mq) else None,
        n_records=len(trace.records))
    if summary["status"] == "ok" and (mon["diverging"] or slack < -1e-6 or not rem_ok):
        summary.update(status="invariant-failure", exit_code=EXIT_INVARIANT)
    if write:
        write_rescaled_csv(out / "rescaled_trace.csv", trace, mt if trace.records else None,
                           cfg.header())
        write_majorant_csv(out / "majorants.csv", mt, cfg.header())
        _write_json(out / "fit_report.json", {"fit": summary["fit"]}, cfg)
        _write_json(out / "monitor.json", {k: summary[k] for k in (
            "status", "monitor", "comparison_slack", "remainder_pass", "remainder_max_ratio",
            "normalization") if k in summary} | {k: summary.get(k) for k in ("abort", "last_good_tau")},
            cfg)
        write_manifest(out, cfg, summary["exit_code"])
    return summary


def cmd_simulate_rescaled(cfg: RunConfig) -> int:
    try:
        s = run_rescaled_pipeline(cfg)
    except InfeasibleInitialData as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if s["exit_code"] == EXIT_ABORT:
        print(f"solver abort at tau={s['last_good_tau']:.6g}: {s['abort']}", file=sys.stderr)
    elif s["exit_code"] == EXIT_INVARIANT:
        print("invariant failure: see monitor.json", file=sys.stderr)
    return s["exit_code"]


# -- verify ---------------------------------------------------------------------

@dataclass
class Check:
    name: str
    value: float
    tol: float
    passed: bool


def _check(name, value, tol) -> Check:
    return Check(name, float(value), float(tol), bool(value <= tol))


def suite_model(cfg: RunConfig) -> list[Check]:
    out = [
        _check("q(-3) = 0.625", abs(q_exponent(-3.0) - 0.625), 1e-15),
        _check("q(-1) = 1", abs(q_exponent(-1.0) - 1.0), 1e-15),
        _check("t*(1, -1) = 0.5", abs(quench_time_hom(1.0, -1.0) - 0.5), 1e-15),
        _check("t*(1, -2) = 1/3", abs(quench_time_hom(1.0, -2.0) - 1.0 / 3.0), 1e-15),
        _check("u_hom(1, -1, 0.375) = 0.5", abs(u_hom(1.0, -1.0, 0.375) - 0.5), 1e-14),
        _check("beta(0.1, -1, 90) = 0.01", abs(beta_of_tau(0.1, -1.0, 90.0) - 0.01), 1e-15),
        _check("v_profile(1/2, 0) = sqrt 2",
               abs(v_profile(ProfileParams(0.5, 0.0), -1.0, 0.0) - math.sqrt(2)), 1e-15),
    ]
    # profile ODE residual: a' y V' + 2a'/(p-1) V + V^p = 0, where a' = c is the
    # coefficient for which V = ((1-p+by^2)/(2a'))^{1/(1-p)}
    worst = 0.0
    y = np.linspace(-20, 20, 401)
    for p in (-0.5, -1.0, -3.0):
        for a, b in itertools.product((0.3, 0.5, 0.9), (0.0, 0.02, 0.1)):
            pp = ProfileParams(a, b)
            V = v_profile(pp, p, y)
            ap = pp.c
            r = ap * y * v_profile_dy(pp, p, y) + 2 * ap / (p - 1) * V + V ** p
            worst = max(worst, float(np.max(np.abs(r))))
    out.append(_check("profile ODE residual", worst, 1e-10))
    return out


def suite_heat(cfg: RunConfig) -> list[Check]:
    g = Grid(20.0, 801)
    u0 = GridFunction(g, np.ones(g.n_points), even=True)
    tr = run_to_quench(u0, DirectConfig(p=-1.0, stop_floor=0.05, dt_max=1e-3))
    t = np.asarray(tr.times)
    exact = np.sqrt(np.clip(1.0 - 2.0 * t, 0.0, None))
    rel = float(np.max(np.abs(np.asarray(tr.u_min) - exact) / exact))
    out = [_check("homogeneous trace vs closed form", rel, 1e-4),
           _check("homogeneous t*", abs(tr.quench_estimate.t_star - 0.5), 1e-4)]
    x = g.nodes
    f = GridFunction(g, x * x, even=True)
    hc = heat_convolve(f, 0.1).values
    mid = np.abs(x) <= 10
    out.append(_check("heat semigroup on x^2", float(np.max(np.abs(hc - (x * x + 0.2))[mid])), 1e-6))
    ub = GridFunction(g, 1.0 + 0.3 * np.exp(-x * x), even=True)
    d = duhamel_iterate(ub, 0.05, 20, 8, -1.0).values
    imex = run_to_quench(ub, DirectConfig(p=-1.0, dt_max=1e-4, record_times=(0.05,), t_max=0.05))
    ref = imex.snapshot_at(0.05).values
    out.append(_check("Duhamel vs IMEX at t=0.05", float(np.max(np.abs(d - ref) / np.abs(ref))), 1e-3))
    return out


def suite_spectral(cfg: RunConfig) -> list[Check]:
    from .linops import (eigenpair, mehler_apply, spectral_residual, verify_decay)
    alpha, p = 0.5, cfg.p
    g = Grid(20.0, 4001)  # h = 0.01
    out = []
    for n in (0, 1, 2):
        out.append(_check(f"eigen-residual n={n}", spectral_residual(n, alpha, p, g), 1e-4))
    gm = Grid(20.0, 801)
    for n, rate in ((0, 2 * alpha / (1 - p)), (2, 2 * p * alpha / (1 - p))):
        _, phi = eigenpair(n, alpha, p, gm)
        got = mehler_apply(phi, alpha, p, 1.0).values
        want = math.exp(rate) * phi.values
        out.append(_check(f"Mehler growth factor n={n}", float(np.max(np.abs(got - want))), 1e-6))
    z = gm.nodes
    f = GridFunction(gm, np.exp(-z * z / 3.0) * (1 + np.cos(z)), even=True)
    two = mehler_apply(mehler_apply(f, alpha, p, 0.4), alpha, p, 0.6).values
    one = mehler_apply(f, alpha, p, 1.0).values
    out.append(_check("Mehler semigroup identity", float(np.max(np.abs(two - one))), 1e-6))
    for mode, k in (("P2-plain", 0.0), ("P1-weighted-k", 0.0), ("P1-weighted-k", 0.5),
                    ("P1-weighted-k", 1.0)):
        rep = verify_decay(mode, alpha, p, k)
        out.append(_check(f"decay {mode} k={k:g}: worst fitted - predicted",
                          rep.worst - rep.predicted, 0.05))
    rep = verify_decay("P3-full", alpha, p, beta=0.05)
    out.append(Check("decay P3-full beta=0.05: fitted c0", rep.c0, 0.05, bool(rep.c0 > 0.05)))
    return out


def suite_splitting(cfg: RunConfig) -> list[Check]:
    from .splitting import SplittingFailure, extract_params, g_jacobian, G_map, orthogonality_residuals
    p = cfg.p
    g = cfg.y_grid
    y = g.nodes
    # the truncated Gaussian moments must match their closed forms before any root is trusted
    quad = max(abs(inner_product(GridFunction(g, np.exp(-0.5 * a * y * y)),
                                 GridFunction(g, np.ones_like(y))) - math.sqrt(2 * math.pi / a))
               for a in (0.25, 1.0))
    out = [_check("quadrature tolerance of the splitting weights", quad, 1e-10)]
    if not out[0].passed:
        return out
    worst_fp = worst_orth = 0.0
    for a, b in itertools.product(np.linspace(0.25, 1.0, 5), np.linspace(0.0, 0.1, 5)):
        v = GridFunction(g, v_profile(ProfileParams(a, b), p, y), even=True)
        try:
            r = extract_params(v, (0.5, 0.05), p)
        except SplittingFailure:
            return out + [Check(f"fixed point ({a:g}, {b:g})", math.inf, 1e-9, False)]
        worst_fp = max(worst_fp, abs(r.a - a), abs(r.b - b))
        worst_orth = max(worst_orth, abs(r.residual_0), abs(r.residual_2))
    out += [_check("manifold fixed points", worst_fp, 1e-9),
            _check("orthogonality residuals", worst_orth, 1e-10)]
    worst_j = 0.0
    rng = np.random.default_rng(cfg.seed)
    for a, b in itertools.product(np.linspace(0.3, 0.9, 5), np.linspace(0.01, 0.1, 5)):
        v = GridFunction(g, v_profile(ProfileParams(a, b), p, y)
                         * (1 + 0.01 * np.exp(-y * y / 8)), even=True)
        J = g_jacobian((a, b), v, p).total
        eps = 1e-6
        fd = np.column_stack([(G_map((a + eps * e0, b + eps * e1), v, p)
                               - G_map((a - eps * e0, b - eps * e1), v, p)) / (2 * eps)
                              for e0, e1 in ((1, 0), (0, 1))])
        worst_j = max(worst_j, float(np.max(np.abs(fd - J)) / np.max(np.abs(J))))
    out.append(_check("analytic vs FD Jacobian", worst_j, 1e-6))
    star = (0.5, 0.02)
    v = GridFunction(g, v_profile(ProfileParams(*star), p, y) + 1e-4 * np.exp(-y * y / 8), even=True)
    ref = extract_params(v, star, p)
    spread = 0.0
    for _ in range(100):
        ang, rad = rng.uniform(0, 2 * math.pi), 0.05 * math.sqrt(rng.uniform())
        init = (star[0] + rad * math.cos(ang), max(star[1] + rad * math.sin(ang), 0.0))
        r = extract_params(v, init, p)
        spread = max(spread, abs(r.a - ref.a), abs(r.b - ref.b))
    out.append(_check("uniqueness over 100 initializations", spread, 1e-8))
    r0, r2 = orthogonality_residuals(ref.xi, ref.a)
    out.append(_check("orthogonality of perturbed split", max(abs(r0), abs(r2)), 1e-10))
    return out


SUITES = {"spectral": suite_spectral, "splitting": suite_splitting, "heat": suite_heat,
          "model": suite_model}


def cmd_verify(cfg: RunConfig, suite: str) -> int:
    if suite not in SUITES:
        print(f"config error: unknown suite {suite!r}; choose from {sorted(SUITES)}", file=sys.stderr)
        return EXIT_CONFIG
    out = _outdir(cfg)
    results = SUITES[suite](cfg)
    failed = [c for c in results if not c.passed]
    for c in results:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.value:.3e} (tol {c.tol:.1e})")
    code = EXIT_INVARIANT if failed else EXIT_OK
    _write_json(out / f"verify_{suite}.json",
                {"suite": suite, "passed": not failed, "results": [asdict(c) for c in results]}, cfg)
    write_manifest(out, cfg, code)
    for c in failed:
        print(f"invariant failure: {c.name}", file=sys.stderr)
    return code


# -- sweep ----------------------------------------------------------------------

SWEEP_KEYS = ("p", "b0", "delta0")
SWEEP_COLUMNS = ("cell", "p", "b0", "delta0", "status", "lambda_exponent", "b_log_constant",
                 "b_log_limit", "b_log_target", "c_limit", "t_star", "M1", "Mq",
                 "comparison_slack", "remainder_pass", "diverging")


def parse_vary(items) -> dict:
    grid = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--vary expects key=v1,v2,..., got {item!r}")
        k, vals = item.split("=", 1)
        key = _key(k)
        if key not in SWEEP_KEYS:
            raise ConfigError(f"sweeps vary only {SWEEP_KEYS}, got {k!r}")
        grid[key] = [float(v) for v in vals.split(",") if v.strip()]
    return grid


def sweep_cells(template: RunConfig, grid: dict) -> list[RunConfig]:
    if not grid:
        return []
    keys = list(grid)
    cells = []
    for k, combo in enumerate(itertools.product(*(grid[key] for key in keys))):
        cfg = replace(template, **dict(zip(keys, combo)),
                      output_dir=str(Path(template.output_dir) / f"cell_{k:03d}"))
        cells.append(cfg.validate())
    return cells


def _run_cell(cfg: RunConfig) -> dict:
    try:
        return run_rescaled_pipeline(cfg)
    except Exception as exc:  # noqa: BLE001 - a cell failure must not stop the sweep
        return {"status": "error", "error": f"{type(exc).__name__}: {exc}", "exit_code": EXIT_ABORT}


def cmd_sweep(template: RunConfig, grid: dict, workers: int = 1) -> int:
    out = _outdir(template)
    cells = sweep_cells(template, grid)
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]
    with open(out / "sweep.csv", "w") as fh:
        for line in template.header() + [f"vary={json.dumps(grid, sort_keys=True)}"]:
            fh.write(f"# {line}\n")
        fh.write(",".join(SWEEP_COLUMNS) + "\n")
        for k, (cfg, s) in enumerate(zip(cells, results)):
            fit = s.get("fit", {})
            row = [k, cfg.p, cfg.b0, cfg.delta0, s["status"], fit.get("lambda_exponent"),
                   fit.get("b_log_constant"), fit.get("b_log_limit"), fit.get("b_log_target"),
                   fit.get("c_limit"), fit.get("t_star"), s.get("M1_final"), s.get("Mq_final"),
                   s.get("comparison_slack"), s.get("remainder_pass"),
                   s.get("monitor", {}).get("diverging")]
            fh.write(",".join("" if v is None else repr(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")
    ok = sum(1 for s in results if s["status"] == "ok")
    code = EXIT_OK if not cells or ok >= 0.9 * len(cells) else EXIT_INVARIANT
    write_manifest(out, template, code)
    return code


# -- argument parsing ---------------------------------------------------------------

def _add_config_flags(ap: argparse.ArgumentParser):
    ap.add_argument("--config", help="key=value configuration file")
    for f in fields(RunConfig):
        kind = type(f.default)
        ap.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=kind, default=None,
                        help=f"(default {f.default})")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="quench", allow_abbrev=False,
                                 description="Quenching lab for u_t = u_xx - u^p, p < 0.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("simulate-direct", "simulate-rescaled"):
        _add_config_flags(sub.add_parser(name, allow_abbrev=False))
    sp = sub.add_parser("verify", allow_abbrev=False)
    sp.add_argument("suite")
    _add_config_flags(sp)
    sw = sub.add_parser("sweep", allow_abbrev=False)
    sw.add_argument("--vary", action="append", metavar="KEY=V1,V2",
                    help=f"parameter list for one of {SWEEP_KEYS}; repeat to form a grid")
    sw.add_argument("--workers", type=int, default=1)
    _add_config_flags(sw)
    return ap


def main(argv=None) -> int:
    ap = make_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        if args.command == "sweep":
            grid = parse_vary(args.vary)
            sweep_cells(cfg, grid)  # validate every cell before running any
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    if args.command == "simulate-direct":
        code = cmd_simulate_direct(cfg)
    elif args.command == "simulate-rescaled":
        code = cmd_simulate_rescaled(cfg)
    elif args.command == "verify":
        code = cmd_verify(cfg, args.suite)
    else:
        code = cmd_sweep(cfg, grid, args.workers)
    log.info("%s finished in %.1f s with exit code %d", args.command, time.perf_counter() - t0, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
