"""Physical-space integration of u_t = u_xx - u^p up to quenching.

The time step is a Strang splitting: half a step of the pointwise reaction
flow (solved in closed form), one backward-Euler diffusion step, another
reaction half step. Both sub-steps are order preserving, so the discrete
scheme satisfies the comparison principle exactly. Even symmetry is built
in by working on the half line x >= 0 and mirroring.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_banded

from .grid import GridFunction, heat_kernel_weights
from .model import quench_time_hom

log = logging.getLogger(__name__)


class QuenchCrossing(ArithmeticError):
    """A step would take some node to u <= 0; shrink dt or stop."""


class SolverAbort(RuntimeError):
    """The integration cannot continue (non-finite state, stalled iteration...)."""


def reaction_flow(u: np.ndarray, dt: float, p: float) -> np.ndarray:
    """Exact flow of u' = -u^p over dt, pointwise."""
    s = u ** (1.0 - p) - (1.0 - p) * dt
    if np.any(s <= 0):
        raise QuenchCrossing(f"reaction step of {dt:.3e} crosses the local quench time")
    return s ** (1.0 / (1.0 - p))


def _backward_euler_half(w: np.ndarray, dt: float, h: float, ratio: float) -> np.ndarray:
    """Solve (I - dt D2) u = w on the half line, reflection at 0, u_{M+1} = ratio u_M."""
    m = len(w)
    r = dt / (h * h)
    ab = np.zeros((3, m))
    ab[1, :] = 1.0 + 2.0 * r
    ab[0, 1:] = -r
    ab[2, :-1] = -r
    ab[0, 1] = -2.0 * r  # reflection at x = 0: u_{-1} = u_1
    ab[1, -1] = 1.0 + 2.0 * r - r * ratio
    return solve_banded((1, 1), ab, w)


def _far_ratio(half: np.ndarray) -> float:
    # log-linear extrapolation: log u_{M+1} = 2 log u_M - log u_{M-1}
    return float(half[-1] / half[-2])


def _mirror(half: np.ndarray) -> np.ndarray:
    return np.concatenate([half[:0:-1], half])


def step_imex(u: GridFunction, dt: float, p: float) -> GridFunction:
    """One splitting step of size dt; raises QuenchCrossing if positivity would fail."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    c = u.grid.center
    half = u.values[c:]
    if np.any(half <= 0):
        raise ValueError("step_imex needs u > 0")
    w = reaction_flow(half, 0.5 * dt, p)
    w = _backward_euler_half(w, dt, u.grid.h, _far_ratio(half))
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise QuenchCrossing("diffusion step produced a non-positive value")
    w = reaction_flow(w, 0.5 * dt, p)
    return GridFunction(u.grid, _mirror(w), even=True)


@dataclass
class DirectConfig:
    p: float = -1.0
    dt_safety: float = 0.1
    dt_max: float = 1e-3
    stop_floor: float | None = None  # default 1e-3 * min u0
    t_max: float = math.inf
    sample_stride: int = 1
    record_times: tuple = ()
    fixed_dt: float | None = None
    keep_snapshots: bool = True
    max_steps: int = 5_000_000


@dataclass
class QuenchEstimate:
    t_star: float
    residual: float
    low_confidence: bool
    window: tuple


@dataclass
class DirectTrace:
    times: list = field(default_factory=list)
    u_min: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    stop_reason: str = ""
    quench_estimate: QuenchEstimate | None = None

    def record(self, t: float, u: GridFunction, keep: bool):
        if self.times and not t > self.times[-1]:
            raise SolverAbort("trace times must increase")
        self.times.append(float(t))
        self.u_min.append(u.min())
        self.snapshots.append(u if keep else None)

    def snapshot_at(self, t: float) -> GridFunction:
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if self.snapshots[i] is None:
            raise LookupError("snapshot not kept")
        return self.snapshots[i]

    def to_csv(self, path, header_lines=()):
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["t", "u_min", "quench_flag"])
            last = len(self.times) - 1
            for i, (t, m) in enumerate(zip(self.times, self.u_min)):
                flag = int(i == last and self.stop_reason == "stop_floor")
                w.writerow([repr(t), repr(m), flag])

    def write_snapshots(self, directory, header_lines=()):
        directory = Path(directory)
        for k, snap in enumerate(self.snapshots):
            if snap is not None:
                snap.to_csv(directory / f"snapshot_{k}.csv", header_lines)


def run_to_quench(u0: GridFunction, cfg: DirectConfig) -> DirectTrace:
    """Integrate until min u drops below the stop floor (or t_max)."""
    p = cfg.p
    kappa0 = u0.min()
    if kappa0 <= 0:
        raise ValueError("initial data must be positive")
    floor = cfg.stop_floor if cfg.stop_floor is not None else 1e-3 * kappa0
    pending = sorted(t for t in cfg.record_times if t > 0)
    trace = DirectTrace()
    trace.record(0.0, u0, cfg.keep_snapshots)
    u, t, step = u0, 0.0, 0
    while True:
        if u.min() < floor:
            trace.stop_reason = "stop_floor"
            break
        if t >= cfg.t_max:
            trace.stop_reason = "t_max"
            break
        if step >= cfg.max_steps:
            trace.stop_reason = "max_steps"
            break
        horizon = cfg.dt_safety * u.min() ** (1.0 - p) / (1.0 - p)
        dt = cfg.fixed_dt if cfg.fixed_dt is not None else min(cfg.dt_max, horizon)
        forced = False
        if pending and t + dt >= pending[0] - 1e-14:
            dt, forced = pending[0] - t, True
            pending.pop(0)
        if t + dt > cfg.t_max:
            dt, forced = cfg.t_max - t, True
        try:
            u_new = step_imex(u, dt, p)
        except QuenchCrossing:
            if cfg.fixed_dt is not None:
                trace.stop_reason = "quench_crossing"
                break
            raise SolverAbort(f"quench crossing at t={t:.6g} despite dt bound")
        if not np.all(np.isfinite(u_new.values)):
            raise SolverAbort(f"non-finite state at t={t:.6g}")
        u, t, step = u_new, t + dt, step + 1
        if forced or step % cfg.sample_stride == 0 or u.min() < floor:
            trace.record(t, u, cfg.keep_snapshots)
    if trace.times[-1] != t:
        trace.record(t, u, cfg.keep_snapshots)
    if trace.u_min[-1] <= 0.2 * trace.u_min[0]:
        trace.quench_estimate = estimate_quench_time(trace, p)
    return trace


def estimate_quench_time(trace: DirectTrace, p: float, window: float = 0.4,
                         rtol: float = 1e-6) -> QuenchEstimate:
    """Root of the least-squares line through (t, u_min^{1-p}) on the trailing window.

    The estimate is flagged low-confidence when the trace never decayed to
    0.2 of its initial minimum or the fit residual is large.
    """
    t = np.asarray(trace.times)
    s = np.asarray(trace.u_min) ** (1.0 - p)
    decayed = trace.u_min[-1] <= 0.2 * trace.u_min[0]
    k0 = int(len(t) * (1.0 - window))
    k0 = min(k0, len(t) - 3)
    if k0 < 0:
        return QuenchEstimate(math.nan, math.inf, True, (math.nan, math.nan))
    tw, sw = t[k0:], s[k0:]
    A = np.vstack([tw, np.ones_like(tw)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, sw, rcond=None)
    resid = float(np.max(np.abs(A @ [slope, icpt] - sw)) / max(sw.max(), 1e-300))
    t_star = -icpt / slope if slope < 0 else math.nan
    low = (not decayed) or resid > rtol * 1e3 or not math.isfinite(t_star)
    return QuenchEstimate(float(t_star), resid, bool(low), (float(tw[0]), float(tw[-1])))


def duhamel_iterate(u0: GridFunction, t: float, n_sub: int, n_iter: int, p: float,
                    guard: float = 0.1) -> GridFunction:
    """Picard iteration on u1 = u - e^{t d_x^2} u0 for the integral form of the equation.

    Time integrals use the midpoint rule on n_sub uniform subintervals with
    the integrand at each midpoint taken as the mean of its endpoint values.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    kappa0 = u0.min()
    if kappa0 <= 0:
        raise ValueError("initial data must be positive")
    if t > guard * quench_time_hom(kappa0, p) * (1 + 1e-12):
        raise ValueError(f"t={t} outside the short-time regime "
                         f"(<= {guard * quench_time_hom(kappa0, p):.4g})")
    dtau = t / n_sub
    vals0 = u0.values
    f = [vals0] + [_heat(vals0, u0.grid.h, k * dtau) for k in range(1, n_sub + 1)]
    if n_iter == 0:
        return u0.with_values(_sym(f[-1], u0.even))
    lag_w = [heat_kernel_weights(u0.grid.h, (i + 0.5) * dtau) for i in range(n_sub)]
    u1 = [np.zeros_like(vals0) for _ in range(n_sub + 1)]
    prev = math.inf
    for it in range(n_iter):
        u = [fk + gk for fk, gk in zip(f, u1)]
        if any(np.any(uk <= 0) for uk in u):
            raise SolverAbort("Duhamel iterate lost positivity")
        src = [(0.5 * (u[j] + u[j + 1])) ** p for j in range(n_sub)]
        new = [np.zeros_like(vals0)]
        for k in range(1, n_sub + 1):
            acc = np.zeros_like(vals0)
            for j in range(k):
                acc += _conv(src[j], lag_w[k - j - 1])
            new.append(-dtau * acc)
        res = max(float(np.max(np.abs(a - b))) for a, b in zip(new, u1))
        u1 = new
        log.debug("duhamel iter %d residual %.3e", it, res)
        if res > prev and it > 1:
            raise SolverAbort(f"Duhamel residual increased ({prev:.3e} -> {res:.3e}); "
                              "outside the contraction regime")
        prev = res
        if res < 1e-14:
            break
    return u0.with_values(_sym(f[-1] + u1[-1], u0.even))


def _conv(vals, w):
    from scipy.ndimage import convolve1d
    return convolve1d(vals, w, mode="nearest")


def _heat(vals, h, t):
    return _conv(vals, heat_kernel_weights(h, t))


def _sym(vals, even):
    return 0.5 * (vals + vals[::-1]) if even else vals
