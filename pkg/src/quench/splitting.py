"""Splitting v = V_{a,b} + exp(a y^2/4) xi with xi orthogonal to the two even
tangent modes of the harmonic-oscillator gauge.

The orthogonality conditions read G(mu, v) = 0 with

    G_0 = <V_mu - v, exp(-a y^2/2)>,   G_2 = <V_mu - v, (1 - a y^2) exp(-a y^2/2)>,

i.e. the normalised eigenvector pairings with their constants stripped.
(a, b) is found by a safeguarded Newton iteration with the analytic
Jacobian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import GridFunction, inner_product, l2_norm, trapezoid_weights, weighted_sup_norm
from .model import ProfileParams, initial_weight_exponents, v_profile


class SplittingFailure(RuntimeError):
    """Newton did not converge: the function is outside the splitting neighbourhood."""


@dataclass(frozen=True)
class SplitResult:
    a: float
    b: float
    xi: GridFunction
    residual_0: float
    residual_2: float
    newton_iters: int

    @property
    def params(self) -> ProfileParams:
        return ProfileParams(self.a, self.b)


@dataclass(frozen=True)
class GMapJacobian:
    A1: np.ndarray
    A2: np.ndarray
    G1: np.ndarray
    G2: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.A1 + self.A2

    @property
    def condition(self) -> dict:
        return {k: float(np.linalg.cond(getattr(self, k))) for k in ("A1", "G1", "G2")} | {
            "total": float(np.linalg.cond(self.total))}


def _weights(a: float, y: np.ndarray):
    e = np.exp(-0.5 * a * y * y)
    return e, (1.0 - a * y * y) * e


def profile_values(a: float, b: float, p: float, y) -> np.ndarray:
    return v_profile(ProfileParams(a, b), p, y)


def G_map(mu, v: GridFunction, p: float) -> np.ndarray:
    """The two orthogonality defects of v - V_mu (normalisation constants dropped)."""
    a, b = float(mu[0]), float(mu[1])
    y = v.grid.nodes
    w0, w2 = _weights(a, y)
    q = trapezoid_weights(v.grid) * (profile_values(a, b, p, y) - v.values)
    return np.array([np.dot(q, w0), np.dot(q, w2)])


def g_jacobian(mu, v: GridFunction, p: float) -> GMapJacobian:
    """d G / d(a, b) split as A1 (profile derivatives) + A2 (weight derivatives).

    G1 G2 is the exact factorisation of A1 at b = 0: G1 holds the moments of
    {1, y^2} against the weights and G2 the coefficients of dV/da, dV/db in
    that basis.
    """
    a, b = float(mu[0]), float(mu[1])
    y = v.grid.nodes
    tw = trapezoid_weights(v.grid)
    w0, w2 = _weights(a, y)
    V = profile_values(a, b, p, y)
    dVa = -V / ((1.0 - p) * (a + 0.5))
    dVb = y * y * V / ((1.0 - p) * (1.0 - p + b * y * y))
    A1 = np.array([[np.dot(tw, dVa * w0), np.dot(tw, dVb * w0)],
                   [np.dot(tw, dVa * w2), np.dot(tw, dVb * w2)]])
    r = tw * (V - v.values)
    e = np.exp(-0.5 * a * y * y)
    # d/da of the weights: -y^2/2 e and -(y^2/2)(3 - a y^2) e
    A2 = np.array([[-0.5 * np.dot(r, y * y * e), 0.0],
                   [-0.5 * np.dot(r, (3.0 - a * y * y) * y * y * e), 0.0]])
    G1 = np.array([[np.dot(tw, w0), np.dot(tw, y * y * w0)],
                   [np.dot(tw, w2), np.dot(tw, y * y * w2)]])
    V0 = ((1.0 - p) / (a + 0.5)) ** (1.0 / (1.0 - p))
    G2 = V0 * np.diag([-1.0 / ((1.0 - p) * (a + 0.5)), 1.0 / (1.0 - p) ** 2])
    return GMapJacobian(A1, A2, G1, G2)


def orthogonality_residuals(xi: GridFunction, a: float) -> tuple[float, float]:
    """<xi, phi_0a> and <xi, phi_2a> with the normalised eigenvectors."""
    y = xi.grid.nodes
    e = np.exp(-0.25 * a * y * y)
    phi0 = (a / (2.0 * math.pi)) ** 0.25 * e
    phi2 = (a / (8.0 * math.pi)) ** 0.25 * (1.0 - a * y * y) * e
    return (inner_product(xi, GridFunction(xi.grid, phi0)),
            inner_product(xi, GridFunction(xi.grid, phi2)))


def fluctuation(v: GridFunction, a: float, b: float, p: float) -> GridFunction:
    y = v.grid.nodes
    vals = np.exp(-0.25 * a * y * y) * (v.values - profile_values(a, b, p, y))
    if v.even:
        vals = 0.5 * (vals + vals[::-1])
    return GridFunction(v.grid, vals, even=v.even)


def extract_params(v: GridFunction, mu_init, p: float, tol_orth: float = 1e-10,
                   max_iter: int = 25, trust_radius: float = 0.2) -> SplitResult:
    """Newton on G(mu, v) = 0 from mu_init.

    Steps are capped at the trust radius and halved while the defect grows;
    b is kept >= 0, and on the b = 0 face only a is updated.
    """
    mu = np.array([float(mu_init[0]), max(float(mu_init[1]), 0.0)])
    if not 0.0 < mu[0] < 2.0:
        raise ValueError(f"initial a={mu[0]} outside (0, 2)")
    gval = G_map(mu, v, p)
    it = 0
    for it in range(1, max_iter + 1):
        J = g_jacobian(mu, v, p).total
        try:
            step = -np.linalg.solve(J, gval)
        except np.linalg.LinAlgError as exc:
            raise SplittingFailure("singular splitting Jacobian") from exc
        if mu[1] + step[1] < 0.0:
            # one-sided step on the b = 0 face
            step = np.array([-gval[0] / J[0, 0], -mu[1]])
        n = float(np.hypot(*step))
        if n > trust_radius:
            step *= trust_radius / n
        for _ in range(8):
            trial = mu + step
            if 0.0 < trial[0] < 2.0:
                gtrial = G_map(trial, v, p)
                if np.linalg.norm(gtrial) <= np.linalg.norm(gval) or np.linalg.norm(step) < 1e-13:
                    break
            step *= 0.5
        else:
            raise SplittingFailure(f"Newton line search stalled at a={mu[0]:.6g}, b={mu[1]:.6g}")
        mu, gval = trial, gtrial
        if np.linalg.norm(step) <= 1e-14 * (1.0 + np.linalg.norm(mu)):
            break
    a, b = float(mu[0]), float(mu[1])
    xi = fluctuation(v, a, b, p)
    r0, r2 = orthogonality_residuals(xi, a)
    scale = max(1.0, l2_norm(xi))
    on_face = b == 0.0 and abs(r2) > tol_orth * scale
    if abs(r0) > tol_orth * scale or (abs(r2) > tol_orth * scale and not on_face):
        raise SplittingFailure(
            f"orthogonality residuals ({r0:.2e}, {r2:.2e}) above tolerance after {it} "
            f"Newton steps: outside the splitting neighbourhood or grid too short")
    return SplitResult(a, b, xi, r0, r2, it)


def verify_ic_bounds(v: GridFunction, mu0, p: float, b0: float, delta0: float,
                     mu_init=None) -> dict:
    """Measured constants in the transfer bounds from (v, mu0) to the split (v, g(v)).

    Each entry holds (lhs, rhs, lhs/rhs); a zero rhs with zero lhs reports
    a ratio of 0.
    """
    res = extract_params(v, mu0 if mu_init is None else mu_init, p)
    y = v.grid.nodes
    d0 = GridFunction(v.grid, v.values - profile_values(mu0[0], mu0[1], p, y))
    d1 = GridFunction(v.grid, v.values - profile_values(res.a, res.b, p, y))
    dist = float(math.hypot(res.a - mu0[0], res.b - mu0[1]))

    def entry(lhs, rhs):
        if rhs == 0.0:
            return (lhs, rhs, 0.0 if lhs <= 1e-12 else math.inf)
        return (lhs, rhs, lhs / rhs)

    report = {
        "param_shift": entry(dist, delta0 * b0 ** 1.5),
        "weighted_n3": entry(weighted_sup_norm(d1, 3), weighted_sup_norm(d0, 3)),
        "weighted_n2": entry(weighted_sup_norm(d1, 2), delta0 * b0 + delta0 * b0 ** 1.5),
    }
    if p < -1:
        q = initial_weight_exponents(p)[-1]
        report["weighted_nq"] = entry(weighted_sup_norm(d1, q),
                                      delta0 * b0 ** (q / 2) + delta0 * b0 ** ((1 + q) / 2))
    report["split"] = res
    return report
