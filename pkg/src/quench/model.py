"""Closed-form profiles, scalar laws and initial data for u_t = u_xx - u^p, p < 0.

Everything here is a pure function of its inputs; the solvers and the
diagnostics test themselves against these formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import Grid, GridFunction, weighted_sup_norm

PERTURBATIONS = ("zero", "gaussian-bump", "hermite4-mode")


class InfeasibleInitialData(ValueError):
    """Raised when requested initial data cannot satisfy the quenching hypotheses."""


def q_exponent(p: float) -> float:
    """Weight exponent q = min{4/(1-p), 2(2-p)/(1-p)^2, 1}."""
    if not p < 0:
        raise ValueError(f"q_exponent needs p < 0, got p={p}")
    return min(4.0 / (1.0 - p), 2.0 * (2.0 - p) / (1.0 - p) ** 2, 1.0)


@dataclass(frozen=True)
class ExponentConfig:
    """The absorption power p and the constants derived from it."""

    p: float
    q: float = field(init=False)
    kappa_b: float = field(init=False)  # 4p/(p-1)^2, slope of d(1/beta)/dtau up to sign
    kappa_v: float = field(init=False)  # 2/(1-p), growth exponent of the far field

    def __post_init__(self):
        if not self.p < 0:
            raise ValueError(f"p must be negative, got {self.p}")
        object.__setattr__(self, "q", q_exponent(self.p))
        object.__setattr__(self, "kappa_b", 4.0 * self.p / (self.p - 1.0) ** 2)
        object.__setattr__(self, "kappa_v", 2.0 / (1.0 - self.p))

    @property
    def b_log_target(self) -> float:
        """Limit of b(t) ln|t*-t|, i.e. (p-1)^2/(4p)."""
        return (self.p - 1.0) ** 2 / (4.0 * self.p)


@dataclass(frozen=True)
class ProfileParams:
    """Parameters (a, b, c) of the almost-solution, tied by 2c = a + 1/2."""

    a: float
    b: float
    c: float = field(init=False)

    def __post_init__(self):
        if self.a < 0:
            raise ValueError(f"scaling rate a must be >= 0, got {self.a}")
        if self.b < 0:
            raise ValueError(f"curvature b must be >= 0 (profile singular otherwise), got {self.b}")
        object.__setattr__(self, "c", 0.5 * (self.a + 0.5))

    @classmethod
    def from_c(cls, c: float, b: float) -> "ProfileParams":
        return cls(a=2.0 * c - 0.5, b=b)


# -- homogeneous solutions --------------------------------------------------

def quench_time_hom(u0: float, p: float) -> float:
    return u0 ** (1.0 - p) / (1.0 - p)


def u_hom(u0: float, p: float, t):
    """x-independent solution (u0^{1-p} - (1-p) t)^{1/(1-p)}."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    s = u0 ** (1.0 - p) - (1.0 - p) * t
    if np.any(s <= 0):
        raise ValueError(f"t must be below the quench time {quench_time_hom(u0, p)}")
    out = s ** (1.0 / (1.0 - p))
    return float(out) if out.ndim == 0 else out


# -- profiles ----------------------------------------------------------------

def _profile_power(num, den, p):
    # (num/den)^{1/(1-p)} evaluated in log space; num spans many decades for large |y|
    return np.exp((np.log(num) - math.log(den)) / (1.0 - p))


def v_profile(params: ProfileParams, p: float, y):
    """((1 - p + b y^2) / (2c))^{1/(1-p)}."""
    y = np.asarray(y, dtype=float)
    out = _profile_power(1.0 - p + params.b * y * y, 2.0 * params.c, p)
    return float(out) if out.ndim == 0 else out


def v_profile_dy(params: ProfileParams, p: float, y):
    """Analytic y-derivative of :func:`v_profile`."""
    y = np.asarray(y, dtype=float)
    v = v_profile(params, p, y)
    out = 2.0 * params.b * y * v / ((1.0 - p) * (1.0 - p + params.b * y * y))
    return float(out) if np.ndim(out) == 0 else out


def gauged_profile(params: ProfileParams, p: float, y):
    """v_profile times the gauge factor exp(-a y^2/4)."""
    y = np.asarray(y, dtype=float)
    out = np.exp((np.log(1.0 - p + params.b * y * y) - math.log(2.0 * params.c)) / (1.0 - p)
                 - params.a * y * y / 4.0)
    return float(out) if out.ndim == 0 else out


def static_amplitude(a: float, p: float) -> float:
    """Homogeneous static solution ((1-p)/(2a))^{1/(1-p)} of the frame equation at frozen a."""
    return ((1.0 - p) / (2.0 * a)) ** (1.0 / (1.0 - p))


def lower_envelope(y, beta: float, p: float):
    """Two-valued barrier g(y, beta)."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    y = np.asarray(y, dtype=float)
    inner = ((1.0 - p) / 2.0) ** (1.0 / (1.0 - p))
    outer = (2.0 * (1.0 - p)) ** (1.0 / (1.0 - p))
    out = np.where(beta * y * y <= 4.0 * (1.0 - p), inner, outer)
    return float(out) if out.ndim == 0 else out


def beta_of_tau(b0: float, p: float, tau):
    """Reference curvature 1/(1/b0 - 4p/(p-1)^2 tau)."""
    if b0 <= 0:
        raise ValueError("b0 must be positive")
    tau = np.asarray(tau, dtype=float)
    out = 1.0 / (1.0 / b0 - 4.0 * p / (p - 1.0) ** 2 * tau)
    return float(out) if out.ndim == 0 else out


# -- initial data ------------------------------------------------------------

@dataclass(frozen=True)
class InitialDataSpec:
    b0: float
    c0: float = 0.5
    delta0: float = 0.0
    perturbation_id: str = "hermite4-mode"
    lambda0: float = 1.0

    def __post_init__(self):
        if self.b0 < 0:
            raise ValueError("b0 must be >= 0")
        if not 0.5 <= self.c0 <= 2.0:
            raise ValueError(f"c0 must lie in [1/2, 2], got {self.c0}")
        if self.delta0 < 0:
            raise ValueError("delta0 must be >= 0")
        if self.perturbation_id not in PERTURBATIONS:
            raise ValueError(f"unknown perturbation {self.perturbation_id!r}; "
                             f"expected one of {PERTURBATIONS}")
        if self.lambda0 <= 0:
            raise ValueError("lambda0 must be positive")


def initial_weight_exponents(p: float) -> tuple[float, ...]:
    """Weights n for which the initial-data bounds are imposed (q only for p < -1)."""
    return (2.0, 3.0, q_exponent(p)) if p < -1 else (2.0, 3.0)


def base_profile(spec: InitialDataSpec, p: float, x):
    """((1 - p + b0 x^2)/(2 c0))^{1/(1-p)}."""
    return v_profile(ProfileParams.from_c(spec.c0, spec.b0), p, x)


def hermite4_shape(x):
    """Even quartic times exp(-x^2/8), orthogonal to span{1, x^2} exp(-x^2/4).

    exp(-x^2/8) is the a = 1/2 gauge; orthogonality is against the two
    splitting weights at a = 1/2, so the mode carries no (a, b) component.
    """
    x = np.asarray(x, dtype=float)
    # moments of exp(-3x^2/8): variance s2 = 4/3
    s2 = 4.0 / 3.0
    m2, m4, m6 = s2, 3.0 * s2 ** 2, 15.0 * s2 ** 3
    # m4 + c2 m2 + c0 = 0 and m6 + c2 m4 + c0 m2 = 0
    c2, c0 = np.linalg.solve([[m2, 1.0], [m4, m2]], [-m4, -m6])
    return (x ** 4 + c2 * x * x + c0) * np.exp(-x * x / 8.0)


def gaussian_bump_shape(x, b0: float):
    """A pair of even dips centred at |x| = b0^{-1/2}."""
    x = np.asarray(x, dtype=float)
    x0 = 1.0 / math.sqrt(b0)
    w = 0.5 * x0
    return -(np.exp(-((x - x0) / w) ** 2) + np.exp(-((x + x0) / w) ** 2))


def _envelope_scale(spec: InitialDataSpec, p: float) -> float:
    return 2.0 * spec.c0 + 2.0 * spec.b0 / (1.0 - p)


def initial_lower_bound(spec: InitialDataSpec, p: float, x):
    """(2c0 + 2b0/(1-p))^{1/(p-1)} g((2c0 + 2b0/(1-p))^{1/2} x, b0)."""
    s = _envelope_scale(spec, p)
    return s ** (1.0 / (p - 1.0)) * lower_envelope(math.sqrt(s) * np.asarray(x, dtype=float),
                                                   spec.b0, p)


def initial_data_fn(spec: InitialDataSpec, p: float, grid: Grid | None = None) -> Callable:
    """Return u0 as a callable of x.

    The perturbation amplitude is the largest multiple of the shape that keeps
    every weighted bound ||<x>^{-n}(u0 - profile)|| <= delta0 b0^{n/2}; the
    result is then clipped from below by the barrier. ``grid`` fixes the nodes
    on which the shape norms are measured.
    """
    if spec.perturbation_id == "zero" or spec.delta0 == 0.0 or spec.b0 == 0.0:
        return lambda x: base_profile(spec, p, x)

    if grid is None:
        grid = Grid(half_width=40.0, n_points=1601)
    if spec.perturbation_id == "hermite4-mode":
        shape = hermite4_shape
    else:
        shape = lambda x: gaussian_bump_shape(x, spec.b0)  # noqa: E731
    s_vals = GridFunction(grid, shape(grid.nodes))
    amp = min(spec.delta0 * spec.b0 ** (n / 2.0) / weighted_sup_norm(s_vals, n)
              for n in initial_weight_exponents(p))

    def u0(x):
        x = np.asarray(x, dtype=float)
        cand = base_profile(spec, p, x) + amp * shape(x)
        return np.maximum(cand, initial_lower_bound(spec, p, x))

    return u0


def check_initial_data(u0: GridFunction, spec: InitialDataSpec, p: float, rtol: float = 1e-12) -> dict:
    """Measure the quenching hypotheses on sampled data; returns the measured slacks."""
    x = u0.grid.nodes
    dev = GridFunction(u0.grid, u0.values - base_profile(spec, p, x))
    report = {"even": bool(np.array_equal(u0.values, u0.values[::-1]))}
    for n in initial_weight_exponents(p):
        lhs = weighted_sup_norm(dev, n)
        rhs = spec.delta0 * spec.b0 ** (n / 2.0)
        report[f"weighted_n{n:g}"] = (lhs, rhs, lhs <= rhs * (1 + rtol) + 1e-15)
    slack = float(np.min(u0.values - initial_lower_bound(spec, p, x)))
    report["lower_bound_slack"] = slack
    return report


def generate_initial_data(spec: InitialDataSpec, grid: Grid, p: float) -> GridFunction:
    """Sample u0 on ``grid`` and verify both hypotheses post hoc."""
    fn = initial_data_fn(spec, p, grid)
    u0 = GridFunction(grid, fn(grid.nodes), even=True)
    rep = check_initial_data(u0, spec, p)
    for key, val in rep.items():
        if key.startswith("weighted") and not val[2]:
            raise InfeasibleInitialData(
                f"weighted-norm bound {key}: measured {val[0]:.3e} > allowed {val[1]:.3e}")
    if rep["lower_bound_slack"] < 0:
        raise InfeasibleInitialData(
            f"lower bound g violated by {-rep['lower_bound_slack']:.3e}")
    if not rep["even"]:
        raise InfeasibleInitialData("initial data is not even")
    return u0


@dataclass(frozen=True)
class NormalizedData:
    u: GridFunction
    k0: float
    delta1: float
    beta: float


def normalize_initial_data(u0, b0: float, c0: float, p: float, delta0: float = 0.0,
                           grid: Grid | None = None) -> NormalizedData:
    """Rescale u0 so that the profile has 2c0 + 2b0/(1-p) = 1.

    ``u0`` may be a GridFunction (resampled with cubic interpolation) or a
    callable of x (evaluated exactly at k0 x); for a callable, ``grid`` gives
    the output nodes.
    """
    if not 0.5 <= c0 <= 2.0:
        raise ValueError(f"c0 must lie in [1/2, 2], got {c0}")
    k0 = (2.0 * c0 + 2.0 * b0 / (1.0 - p)) ** -0.5
    pref = k0 ** (2.0 / (p - 1.0))
    if isinstance(u0, GridFunction):
        grid = u0.grid
        vals = pref * u0.interpolate(k0 * grid.nodes)
    else:
        if grid is None:
            raise ValueError("grid is required when u0 is a callable")
        vals = pref * np.asarray(u0(k0 * grid.nodes), dtype=float)
    # exact evenness despite interpolation rounding
    vals = 0.5 * (vals + vals[::-1])
    return NormalizedData(GridFunction(grid, vals, even=True), k0, delta0 * pref, b0 * k0 * k0)


def normalized_profile_params(beta: float, p: float) -> ProfileParams:
    """(a, b) of the normalized profile ((1-p+beta x^2)/(1 - 2beta/(1-p)))^{1/(1-p)}."""
    return ProfileParams(a=0.5 - 2.0 * beta / (1.0 - p), b=beta)
