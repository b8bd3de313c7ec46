"""Evolution in blow-up variables:

    v(y, tau) = lambda^{2/(p-1)} u(lambda y, t),   d tau = lambda^{-2} dt,   a = -lambda lambda_t,

which satisfies v_tau = v_yy - a y v_y + 2a/(1-p) v - v^p. The scaling rate
a(tau) is not integrated separately: after every step (a, b) are re-read
from v by the splitting, which keeps the fluctuation orthogonal to the
tangent modes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_banded

from .grid import Grid, GridFunction
from .splitting import SplitResult, SplittingFailure, extract_params, profile_values

log = logging.getLogger(__name__)


class RescaledAbort(RuntimeError):
    """Run stopped; ``trace`` holds everything recorded up to ``last_state``."""

    def __init__(self, msg, trace=None, last_state=None):
        super().__init__(msg)
        self.trace = trace
        self.last_state = last_state


@dataclass(frozen=True)
class BlowupState:
    v: GridFunction
    lam: float
    a: float
    b: float
    tau: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if not self.v.even:
            raise ValueError("v must be tagged even")


@dataclass(frozen=True)
class GaugeView:
    w: GridFunction
    a: float


def gauge_transform(v: GridFunction, a: float) -> GaugeView:
    """w = exp(-a y^2/4) v."""
    y = v.grid.nodes
    return GaugeView(v.with_values(np.exp(-0.25 * a * y * y) * v.values), a)


def inverse_gauge(view: GaugeView) -> GridFunction:
    y = view.w.grid.nodes
    return view.w.with_values(view.w.values / np.exp(-0.25 * view.a * y * y))


def to_blowup_frame(u: GridFunction, lam: float, p: float, y_grid: Grid | None = None) -> GridFunction:
    """v(y) = lambda^{2/(p-1)} u(lambda y), resampled by cubic spline."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if y_grid is None:
        y_grid = u.grid.dilate(1.0 / lam)
    if lam * y_grid.half_width > u.grid.half_width * (1 + 1e-12):
        raise ValueError(f"lambda * L_y = {lam * y_grid.half_width:.4g} exceeds the "
                         f"physical grid half-width {u.grid.half_width:.4g}")
    vals = lam ** (2.0 / (p - 1.0)) * u.interpolate(lam * y_grid.nodes)
    if u.even:
        vals = 0.5 * (vals + vals[::-1])
    return GridFunction(y_grid, vals, even=u.even)


def to_physical(v: GridFunction, lam: float, p: float, x_grid: Grid | None = None) -> GridFunction:
    """u(x) = lambda^{2/(1-p)} v(x / lambda)."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if x_grid is None:
        x_grid = v.grid.dilate(lam)
    if x_grid.half_width / lam > v.grid.half_width * (1 + 1e-12):
        raise ValueError("physical grid reaches outside the rescaled domain")
    vals = lam ** (2.0 / (1.0 - p)) * v.interpolate(x_grid.nodes / lam)
    if v.even:
        vals = 0.5 * (vals + vals[::-1])
    return GridFunction(x_grid, vals, even=v.even)


# -- one step -----------------------------------------------------------------

def _reaction(v: np.ndarray, a: float, p: float, dtau: float) -> np.ndarray:
    """Exact flow of v' = 2a/(1-p) v - v^p via s = v^{1-p}, s' = 2a s - (1-p)."""
    s_star = (1.0 - p) / (2.0 * a)
    s = s_star + (v ** (1.0 - p) - s_star) * math.exp(2.0 * a * dtau)
    if np.any(s <= 0):
        raise RescaledAbort("v reached zero inside the rescaled frame")
    return s ** (1.0 / (1.0 - p))


def _linear_be(w: np.ndarray, a: float, dtau: float, h: float, y: np.ndarray,
               right_value: float) -> np.ndarray:
    """Backward Euler for v_tau = v_yy - a y v_y on [0, L]; reflection at 0, Dirichlet at L."""
    m = len(w)
    r = dtau / (h * h)
    drift = a * y * dtau / (2.0 * h)
    if np.any(a * y * h / 2.0 > 1.0):
        raise ValueError("drift cell Peclet number above 1: refine the y grid")
    ab = np.zeros((3, m))
    ab[1, :] = 1.0 + 2.0 * r
    ab[0, 1:] = -(r - drift[:-1])  # super-diagonal: coefficient of v_{i+1} in row i
    ab[2, :-1] = -(r + drift[1:])  # sub-diagonal: coefficient of v_{i-1} in row i
    ab[0, 1] = -2.0 * r
    ab[1, -1] = 1.0
    ab[2, -2] = 0.0
    rhs = w.copy()
    rhs[-1] = right_value
    return solve_banded((1, 1), ab, rhs)


def _advance_v(v: GridFunction, a: float, b: float, p: float, dtau: float) -> GridFunction:
    c = v.grid.center
    y = v.grid.nodes[c:]
    half = v.values[c:]
    if np.any(half <= 0):
        raise RescaledAbort("v must stay positive")
    right = float(profile_values(a, b, p, y[-1]))
    w = _reaction(half, a, p, 0.5 * dtau)
    w = _linear_be(w, a, dtau, v.grid.h, y, right)
    w = _reaction(w, a, p, 0.5 * dtau)
    w[-1] = right
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise RescaledAbort("non-finite or non-positive v after step")
    return GridFunction(v.grid, np.concatenate([w[:0:-1], w]), even=True)


def step_rescaled(state: BlowupState, dtau: float, p: float, frozen: bool = False,
                  split_kwargs: dict | None = None) -> tuple[BlowupState, SplitResult | None]:
    """Advance v with the current a, then re-read (a, b) and update lambda, t, tau.

    lambda uses the trapezoid rule in a over the step and t the geometric
    mean of the two lambdas, so lambda ratios match exp(-int a) exactly.
    """
    if dtau <= 0:
        raise ValueError("dtau must be positive")
    v_new = _advance_v(state.v, state.a, state.b, p, dtau)
    if frozen:
        a_new, b_new, split = state.a, state.b, None
    else:
        try:
            split = extract_params(v_new, (state.a, state.b), p, **(split_kwargs or {}))
        except SplittingFailure as exc:
            raise RescaledAbort(f"left the splitting neighbourhood at tau={state.tau:.6g}: {exc}",
                                last_state=state) from exc
        a_new, b_new = split.a, split.b
    if not 0.0 < a_new < 2.0:
        raise RescaledAbort(f"a={a_new:.4g} left (0, 2)", last_state=state)
    lam_new = state.lam * math.exp(-0.5 * (state.a + a_new) * dtau)
    dt = state.lam * lam_new * dtau
    new = BlowupState(v_new, lam_new, a_new, b_new, state.tau + dtau, state.t + dt)
    return new, split


# -- whole runs -----------------------------------------------------------------

@dataclass
class RescaledConfig:
    p: float = -1.0
    dtau: float = 1e-3
    tau_max: float = 30.0
    sample_stride: int = 50
    frozen: bool = False
    keep_fields: bool = True


@dataclass
class RescaledRecord:
    tau: float
    t: float
    dt_since_prev: float
    lam: float
    a: float
    b: float
    v_min: float
    v: GridFunction | None
    split: SplitResult | None


@dataclass
class RescaledTrace:
    p: float
    records: list = field(default_factory=list)
    aborted: str = ""

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def remaining_time(self) -> np.ndarray:
        """t* - t at each record, accumulated backwards from the last record.

        The tail beyond the last record is lambda^2/(2a), the homogeneous
        extrapolation; the backward sum avoids the cancellation in t* - t.
        """
        last = self.records[-1]
        tail = last.lam ** 2 / (2.0 * last.a)
        inc = self.column("dt_since_prev")
        rem = np.empty(len(self.records))
        acc = tail
        for k in range(len(self.records) - 1, -1, -1):
            rem[k] = acc
            acc += inc[k]
        return rem


def evolve_rescaled(v0: GridFunction, cfg: RescaledConfig, a0: float, b0: float,
                    lambda0: float = 1.0, t0: float = 0.0) -> RescaledTrace:
    """Run to cfg.tau_max; (a0, b0) seed the first splitting Newton solve."""
    p = cfg.p
    trace = RescaledTrace(p)
    if cfg.frozen:
        split0 = None
        a, b = a0, b0
    else:
        try:
            split0 = extract_params(v0, (a0, b0), p)
        except SplittingFailure as exc:
            raise RescaledAbort(f"initial data outside the splitting neighbourhood: {exc}",
                                trace=trace) from exc
        a, b = split0.a, split0.b
    state = BlowupState(v0, lambda0, a, b, 0.0, t0)
    trace.records.append(_record(state, 0.0, split0, cfg))
    n_steps = int(round(cfg.tau_max / cfg.dtau))
    dt_acc = 0.0
    for k in range(1, n_steps + 1):
        lam_prev = state.lam
        try:
            state, split = step_rescaled(state, cfg.dtau, p, frozen=cfg.frozen)
        except RescaledAbort as exc:
            trace.aborted = str(exc)
            exc.trace = trace
            exc.last_state = exc.last_state or state
            raise
        # increments summed separately: t itself saturates as t -> t*
        dt_acc += lam_prev * state.lam * cfg.dtau
        if k % cfg.sample_stride == 0 or k == n_steps:
            # exact tau from the step count avoids drift in the sample times
            state = replace(state, tau=k * cfg.dtau)
            trace.records.append(_record(state, dt_acc, split, cfg))
            dt_acc = 0.0
    return trace


def _record(state: BlowupState, dt: float, split, cfg) -> RescaledRecord:
    return RescaledRecord(state.tau, state.t, dt, state.lam, state.a, state.b, state.v.min(),
                          state.v if cfg.keep_fields else None, split)
