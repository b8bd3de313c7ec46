"""Estimating functions, a-priori monitors, the comparison barrier and the
asymptotic fits, all computed from a recorded rescaled run.

Implicit constants of the "lesssim" bounds are never fixed. Each bound is
monitored through its ratio C(tau) = LHS / RHS (constant set to 1) and
the contract is only that C does not keep growing: the maximum over the
second half of the run stays within twice the maximum over the first.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .grid import weighted_sup_norm
from .linops import gammas
from .model import beta_of_tau, lower_envelope, q_exponent
from .rescaled_solver import RescaledTrace

TRAILING = 0.4  # fraction of samples used by every asymptotic fit


def beta_series(b_start: float, p: float, tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    if b_start <= 0:
        return np.zeros_like(tau)
    return np.asarray(beta_of_tau(b_start, p, tau), dtype=float)


def central_differences(tau: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Centred differences over two sample strides, one-sided at the ends."""
    if len(tau) < 2:
        return np.zeros_like(f)
    return np.gradient(f, tau)


@dataclass
class MajorantTrace:
    p: float
    tau: np.ndarray
    beta: np.ndarray
    m1_inst: np.ndarray
    m2_inst: np.ndarray
    mq_inst: np.ndarray
    a_inst: np.ndarray
    b_inst: np.ndarray
    M1: np.ndarray
    M2: np.ndarray
    Mq: np.ndarray
    A: np.ndarray
    B: np.ndarray
    Gamma1: np.ndarray
    Gamma2: np.ndarray
    xi_norm3: np.ndarray  # ||<y>^{-3} e^{ay^2/4} xi||, the raw remainder size

    @property
    def remainder_ratio(self) -> np.ndarray:
        return self.m1_inst


def _running_max(x: np.ndarray) -> np.ndarray:
    return np.maximum.accumulate(x) if len(x) else x


def majorants(trace: RescaledTrace, p: float | None = None) -> MajorantTrace:
    """M1, M2, Mq, A, B as running maxima along the recorded samples.

    beta(tau) starts from the b read off the first sample.
    """
    p = trace.p if p is None else p
    recs = trace.records
    if not recs:
        e = np.zeros(0)
        return MajorantTrace(p, e, e, e, e, e, e, e, e, e, e, e, e, e, e, e)
    if any(r.split is None for r in recs):
        raise ValueError("majorants need the splitting results of every sample")
    tau = trace.column("tau")
    a = trace.column("a")
    b = trace.column("b")
    beta = beta_series(b[0], p, tau)
    safe = np.where(beta > 0, beta, np.nan)
    n3 = np.array([weighted_sup_norm(r.split.xi, 3.0, gauge=r.a) for r in recs])
    n2 = np.array([weighted_sup_norm(r.split.xi, 2.0, gauge=r.a) for r in recs])
    if p < -1:
        q = q_exponent(p)
        nq = np.array([weighted_sup_norm(r.split.xi, q, gauge=r.a) for r in recs])
        mq = nq / safe ** (q / 2.0)
    else:
        mq = np.full(len(recs), np.nan)
    m1 = n3 / safe ** 1.5
    m2 = n2 / safe
    ai = np.abs(a - 0.5 + 2.0 * b / (1.0 - p)) / safe ** 2
    bi = np.abs(b - beta) / safe ** 1.5
    # beta = 0 (static runs): the normalised quantities are reported as raw sizes
    if b[0] <= 0:
        m1, m2, ai, bi = n3, n2, np.abs(a - 0.5 + 2.0 * b / (1.0 - p)), np.abs(b)
    g1, g2 = gammas(a, b, central_differences(tau, a), central_differences(tau, b), p)
    Mq = _running_max(mq) if p < -1 else mq
    return MajorantTrace(p, tau, beta, m1, m2, mq, ai, bi, _running_max(m1), _running_max(m2), Mq,
                         _running_max(ai), _running_max(bi), np.asarray(g1), np.asarray(g2), n3)


def _halves_ratio(c: np.ndarray) -> tuple[float, float, bool]:
    """(max over first half, max over second half, bounded?) for the 2x contract."""
    n = len(c)
    if n < 2:
        return (float(np.max(c)) if n else 0.0, float(np.max(c)) if n else 0.0, True)
    h = n // 2
    first, second = float(np.max(c[:h])), float(np.max(c[h:]))
    tol = 1e-12  # ratios at round-off level count as zero
    return first, second, second <= 2.0 * max(first, tol)


def apriori_ratios(mt: MajorantTrace) -> dict:
    """C(tau) = LHS/RHS for each a-priori inequality (constants set to 1)."""
    p = mt.p
    M1, M2, A, B = mt.M1, mt.M2, mt.A, mt.B
    s0 = float(mt.beta[0]) if len(mt.beta) else 0.0
    common = 1.0 + M1 ** (2.0 - p) + A * M1
    out = {
        "B_bound": B / (1.0 + M1 * A + M1 ** (2.0 - p) + A),
        "A_bound": A / (A[0] + 1.0 + math.sqrt(s0) * common),
    }
    if p >= -1:
        out["M1_bound"] = M1 / (M1[0] + M1 * M2 + s0 ** 0.25 * common)
        out["M2_bound"] = M2 / (M2[0] + M1 + M2 ** 2 + s0 ** 0.25 * common)
    else:
        Mq = mt.Mq
        gq = Mq ** (1.0 - p) + Mq
        out["M1_bound"] = M1 / (M1[0] + s0 ** 0.25 * common + M1 * gq)
        out["M2_bound"] = M2 / (M2[0] + M1 + M2 * gq + s0 ** 0.25 * (common + M2))
        out["Mq_bound"] = Mq / (Mq[0] + M2 + Mq ** (2.0 - p) + Mq ** 2
                                + s0 ** 0.25 * (1.0 + Mq + M1 ** (2.0 - p) + M1 * A))
    return {k: np.nan_to_num(v, nan=0.0) for k, v in out.items()}


def monitor_apriori(mt: MajorantTrace) -> dict:
    """Per-inequality max C, first/second-half maxima and the bounded flag.

    For p >= -1 the Mq inequality does not apply and is reported as such.
    """
    report = {}
    for name, c in apriori_ratios(mt).items():
        first, second, ok = _halves_ratio(c)
        report[name] = {"max": float(np.max(c)) if len(c) else 0.0,
                        "first_half_max": first, "second_half_max": second, "bounded": ok}
    if "Mq_bound" not in report:
        report["Mq_bound"] = {"applicable": False, "bounded": True}
    report["diverging"] = not all(v["bounded"] for v in report.values() if isinstance(v, dict))
    return report


def comparison_check(trace: RescaledTrace, b0: float, c0: float, p: float) -> float:
    """min over samples and nodes of v - s^{1/(p-1)} g(s^{1/2} y, beta(tau)), s = 2c0 + 2b0/(1-p).

    beta(tau) starts from b0 here. Nodes within one cell of the branch
    switch are compared against both branch values and the smaller slack
    is kept, so the check does not depend on which side a node falls.
    """
    s = 2.0 * c0 + 2.0 * b0 / (1.0 - p)
    lo = ((1.0 - p) / 2.0) ** (1.0 / (1.0 - p))
    hi = (2.0 * (1.0 - p)) ** (1.0 / (1.0 - p))
    worst = math.inf
    for r in trace.records:
        if r.v is None:
            raise ValueError("comparison_check needs the recorded fields")
        y = r.v.grid.nodes
        beta = float(beta_series(b0, p, [r.tau])[0])
        z = math.sqrt(s) * y
        env = s ** (1.0 / (p - 1.0)) * lower_envelope(z, beta, p)
        if beta > 0:
            edge = math.sqrt(4.0 * (1.0 - p) / beta)
            near = np.abs(np.abs(z) - edge) <= math.sqrt(s) * r.v.grid.h
            env = np.where(near, s ** (1.0 / (p - 1.0)) * max(lo, hi), env)
        worst = min(worst, float(np.min(r.v.values - env)))
    return worst


@dataclass
class FitReport:
    t_star: float = math.nan
    t_star_regression: float = math.nan
    lambda_exponent: float = math.nan
    b_log_constant: float = math.nan
    b_log_constant_abs: float = math.nan
    b_log_limit: float = math.nan
    b_log_target: float = math.nan
    c_limit: float = math.nan
    c_last: float = math.nan
    residuals: dict = field(default_factory=dict)
    window: tuple = (math.nan, math.nan)
    flags: list = field(default_factory=list)
    direct_t_star: float | None = None

    def to_json(self) -> str:
        return json.dumps(_jsonable(asdict(self)), indent=2, sort_keys=True)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return None if not math.isfinite(float(x)) else float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def fit_asymptotics(trace: RescaledTrace, direct=None, min_tau: float = 20.0) -> FitReport:
    """Quench-time and log-law fits on the trailing 40% of the samples.

    b_log_constant is the window mean of b ln|t*-t|; b_log_limit is the
    limit of the same product read off the slope of 1/b against ln|t*-t|
    (b ~ C/ln|t*-t| gives 1/b ~ ln|t*-t|/C), which removes the O(1/b0)
    offset that the finite window mean still carries.
    """
    p = trace.p
    rep = FitReport(b_log_target=(p - 1.0) ** 2 / (4.0 * p))
    if direct is not None and getattr(direct, "quench_estimate", None) is not None:
        rep.direct_t_star = direct.quench_estimate.t_star
    n = len(trace.records)
    if n < 5:
        rep.flags.append("too few samples")
        return rep
    tau = trace.column("tau")
    if tau[-1] < min_tau:
        rep.flags.append(f"tau_max {tau[-1]:.3g} below {min_tau:g}: partial report")
    lam, a, b, t = (trace.column(k) for k in ("lam", "a", "b", "t"))
    R = trace.remaining_time()
    rep.t_star = float(t[-1] + lam[-1] ** 2 / (2.0 * a[-1]))
    k0 = max(0, min(int(n * (1.0 - TRAILING)), n - 3))
    w = slice(k0, n)
    rep.window = (float(tau[k0]), float(tau[-1]))
    # lambda^2 is asymptotically linear in t with root t*
    A = np.vstack([t[w] - t[-1], np.ones(n - k0)]).T
    (sl, ic), *_ = np.linalg.lstsq(A, lam[w] ** 2, rcond=None)
    rep.t_star_regression = float(t[-1] - ic / sl) if sl < 0 else math.nan
    lr = np.log(R[w])
    coef, res, *_ = np.polyfit(lr, np.log(lam[w]), 1, full=True)
    rep.lambda_exponent = float(coef[0])
    rep.residuals["lambda_fit"] = float(np.sqrt(res[0] / (n - k0))) if len(res) else 0.0
    blog = b[w] * lr
    rep.b_log_constant = float(np.mean(blog))
    rep.b_log_constant_abs = float(np.mean(b[w] * np.abs(lr)))
    rep.residuals["b_log_spread"] = float(np.std(blog))
    if np.all(b[w] > 0):
        slope = float(np.polyfit(lr, 1.0 / b[w], 1)[0])
        rep.b_log_limit = 1.0 / slope if slope != 0 else math.nan
    else:
        rep.flags.append("b vanished in the window: no log law")
    rep.c_limit = float(np.mean(0.5 * (a[w] + 0.5)))
    rep.c_last = float(0.5 * (a[-1] + 0.5))
    return rep


def remainder_check(mt: MajorantTrace, envelope_power: float = 1.5) -> tuple[bool, float]:
    """Is ||<y>^{-3} e^{ay^2/4} xi|| / beta^power bounded (2x halves contract)?

    Returns (passes, max ratio).
    """
    if mt.beta[0] > 0:
        ratio = mt.xi_norm3 / mt.beta ** envelope_power
    else:
        ratio = mt.xi_norm3
    first, second, ok = _halves_ratio(ratio)
    return ok, float(np.max(ratio)) if len(ratio) else 0.0


RESCALED_COLUMNS = ("tau", "t", "lambda", "a", "b", "M1", "M2", "Mq", "A", "B", "beta",
                    "Gamma1", "Gamma2", "v_min")


def write_rescaled_csv(path, trace: RescaledTrace, mt: MajorantTrace | None, header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(RESCALED_COLUMNS)
        for k, r in enumerate(trace.records):
            if mt is None:
                extra = [math.nan] * 8
            else:
                extra = [mt.M1[k], mt.M2[k], mt.Mq[k], mt.A[k], mt.B[k], mt.beta[k],
                         mt.Gamma1[k], mt.Gamma2[k]]
            row = [r.tau, r.t, r.lam, r.a, r.b] + extra + [r.v_min]
            w.writerow([repr(float(x)) for x in row])


def write_majorant_csv(path, mt: MajorantTrace, header_lines=()):
    cols = ("tau", "beta", "M1", "M2", "Mq", "A", "B", "Gamma1", "Gamma2", "remainder_ratio")
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(cols)
        for k in range(len(mt.tau)):
            vals = [mt.tau[k], mt.beta[k], mt.M1[k], mt.M2[k], mt.Mq[k], mt.A[k], mt.B[k],
                    mt.Gamma1[k], mt.Gamma2[k], mt.remainder_ratio[k]]
            w.writerow([repr(float(x)) for x in vals])
