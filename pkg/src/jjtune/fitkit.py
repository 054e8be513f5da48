"""Least-squares fitting of the empirical resistance-dynamics laws.

All nonlinear fits run on a damped least-squares (Levenberg-Marquardt
style) schedule with central-difference Jacobians; convergence is declared
when the relative cost change falls below 1e-10, capped at 200 iterations.
Standard errors come from the linearized covariance at the optimum (1 sigma).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FitError

LM_MAX_ITER = 200
LM_REL_TOL = 1e-10


@dataclass
class FitResult:
    model: str
    params: dict
    stderr: dict
    rmse: float
    resid_mean: float
    resid_var: float
    n_points: int
    n_params: int
    converged: bool
    notes: list = field(default_factory=list)


@dataclass
class DropSegment:
    duration: float
    depth: float
    excluded_points: int
    whole_trace: bool = False


@dataclass
class ModelComparison:
    rows: list            # (model, n_params, rmse, resid_mean, resid_var)
    preferred: str
    notes: list = field(default_factory=list)


@dataclass
class RelaxationSession:
    """One stopped manipulation: its active amount and the post-stop curve."""

    dr_active: float
    times: np.ndarray      # seconds after the stop
    dr_total: np.ndarray   # R(t)/R(0) - 1


def _residual_stats(resid):
    resid = np.asarray(resid, float)
    rmse = float(np.sqrt(np.mean(resid ** 2)))
    return rmse, float(np.mean(resid)), float(np.var(resid))


def _jacobian(fn, p, f0=None):
    p = np.asarray(p, float)
    cols = []
    for j in range(p.size):
        h = 1e-6 * max(abs(p[j]), 1e-8)
        pp, pm = p.copy(), p.copy()
        pp[j] += h
        pm[j] -= h
        cols.append((fn(pp) - fn(pm)) / (2.0 * h))
    return np.column_stack(cols)


def _lm(fn, p0, max_iter=LM_MAX_ITER, rel_tol=LM_REL_TOL):
    """Minimize sum(fn(p)^2); returns (p, cost, converged)."""
    p = np.asarray(p0, float)
    r = fn(p)
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    for _ in range(max_iter):
        if cost < 1e-28:
            converged = True
            break
        jac = _jacobian(fn, p)
        jtj = jac.T @ jac
        g = jac.T @ r
        stepped = False
        for _ in range(60):
            damp = jtj + lam * np.diag(np.maximum(np.diag(jtj), 1e-30))
            try:
                step = np.linalg.solve(damp, -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            p_try = p + step
            r_try = fn(p_try)
            cost_try = float(r_try @ r_try)
            if np.isfinite(cost_try) and cost_try <= cost:
                stepped = True
                break
            lam *= 10.0
            if lam > 1e14:
                break
        if not stepped:
            converged = True  # no downhill direction left: local optimum
            break
        rel = (cost - cost_try) / max(cost, 1e-300)
        p, r, cost = p_try, r_try, cost_try
        lam = max(lam / 3.0, 1e-12)
        if rel < rel_tol:
            converged = True
            break
    return p, cost, converged


def _lm_covariance(fn, p, cost, n):
    m = np.size(p)
    if n <= m:
        return np.full((m, m), np.nan)
    jac = _jacobian(fn, p)
    s2 = cost / (n - m)
    try:
        return np.linalg.inv(jac.T @ jac) * s2
    except np.linalg.LinAlgError:
        return np.full((m, m), np.nan)


def fit_linear(x, y):
    """Ordinary least squares y = slope*x + offset with 1-sigma errors."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = x.size
    if n < 2:
        raise FitError("linear fit needs at least 2 points")
    sxx = float(np.sum((x - x.mean()) ** 2))
    if sxx == 0.0:
        raise FitError("rank-deficient linear fit: all x identical")
    slope = float(np.sum((x - x.mean()) * (y - y.mean())) / sxx)
    offset = float(y.mean() - slope * x.mean())
    resid = y - (slope * x + offset)
    rmse, rmean, rvar = _residual_stats(resid)
    if n > 2:
        s2 = float(np.sum(resid ** 2)) / (n - 2)
        se_slope = math.sqrt(s2 / sxx)
        se_offset = math.sqrt(s2 * (1.0 / n + x.mean() ** 2 / sxx))
    else:
        se_slope = se_offset = float("nan")
    return FitResult(model="linear",
                     params={"slope": slope, "offset": offset},
                     stderr={"slope": se_slope, "offset": se_offset},
                     rmse=rmse, resid_mean=rmean, resid_var=rvar,
                     n_points=n, n_params=2, converged=True)


def detect_drop(trace, sustain=3):
    """Locate the initial resistance drop to exclude before fitting.

    The excluded interval runs from the first sample to the onset of the
    first sustained rise (``sustain`` consecutive strictly increasing
    differences).  A trace that never recovers is flagged whole-trace.
    """
    r = trace.resistances
    t = trace.times
    n = len(r)
    if n < 2:
        return DropSegment(0.0, 0.0, 0)
    diffs = [r[i + 1] > r[i] for i in range(n - 1)]
    onset = None
    run = min(sustain, n - 1)
    for k in range(n - run):
        if all(diffs[k:k + run]):
            onset = k
            break
    if onset is None:
        depth = max(0.0, (r[0] - min(r)) / r[0])
        return DropSegment(t[-1] - t[0], depth, n, whole_trace=True)
    if onset == 0:
        return DropSegment(0.0, 0.0, 0)
    depth = max(0.0, (r[0] - min(r[:onset + 1])) / r[0])
    return DropSegment(t[onset] - t[0], depth, onset)


def exclude_drop(trace, segment=None, sustain=3):
    """Return (trimmed trace, drop segment)."""
    if segment is None:
        segment = detect_drop(trace, sustain=sustain)
    if segment.whole_trace:
        raise FitError("drop never recovers: whole trace excluded")
    return trace.sliced(segment.excluded_points), segment


def fit_poly_time(trace, order=2):
    """Fit dR(t) to a polynomial through the origin on a drop-excluded trace.

    Time and dR are re-referenced to the first sample, enforcing dR(0) = 0.
    Order 2 returns the linear and quadratic rate coefficients.
    """
    if order not in (2, 3):
        raise DomainError("polynomial order must be 2 or 3")
    n = len(trace)
    if n < order + 2:
        raise FitError(f"need at least {order + 2} points for order {order}")
    t = np.asarray(trace.times, float)
    r = np.asarray(trace.resistances, float)
    t = t - t[0]
    y = r / r[0] - 1.0
    design = np.column_stack([t ** k for k in range(1, order + 1)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    rmse, rmean, rvar = _residual_stats(resid)
    dof = n - order
    s2 = float(np.sum(resid ** 2)) / dof if dof > 0 else float("nan")
    try:
        cov = np.linalg.inv(design.T @ design) * s2
        se = np.sqrt(np.diag(cov))
    except np.linalg.LinAlgError:
        se = np.full(order, np.nan)
    names = ["alpha", "beta", "gamma"][:order]
    return FitResult(model=f"poly{order}",
                     params=dict(zip(names, map(float, coef))),
                     stderr=dict(zip(names, map(float, se))),
                     rmse=rmse, resid_mean=rmean, resid_var=rvar,
                     n_points=n, n_params=order, converged=True)


def fit_exponential_rate(v, alpha):
    """Fit the exponential voltage law alpha = alpha0 * exp(V/V0).

    The reported parameters come from the log-space linear regression,
    which weights the decades of rate data evenly; a nonlinear refinement
    in linear space is reported alongside (``*_refined``) as a
    cross-check.
    """
    v = np.asarray(v, float)
    alpha = np.asarray(alpha, float)
    if v.size < 2:
        raise FitError("exponential fit needs at least 2 points")
    if np.any(alpha <= 0):
        raise DomainError("all rates must be positive for the exponential law")
    lin = fit_linear(v, np.log(alpha))
    slope = lin.params["slope"]
    if slope == 0:
        raise FitError("flat rate data: V0 unidentifiable")
    v0_log = 1.0 / slope
    a0_log = math.exp(lin.params["offset"])
    se_v0_log = lin.stderr["slope"] / slope ** 2 if np.isfinite(lin.stderr["slope"]) else float("nan")
    se_a0_log = a0_log * lin.stderr["offset"] if np.isfinite(lin.stderr["offset"]) else float("nan")

    def resid(p):
        return p[0] * np.exp(v / p[1]) - alpha

    p_ref, cost_ref, conv = _lm(resid, [a0_log, v0_log])
    cov = _lm_covariance(resid, p_ref, cost_ref, v.size)
    se_ref = np.sqrt(np.abs(np.diag(cov)))

    model_log = a0_log * np.exp(v / v0_log)
    rmse, rmean, rvar = _residual_stats(model_log - alpha)
    notes = [f"refined rmse = {math.sqrt(cost_ref / v.size):.6g}"]
    return FitResult(
        model="exponential_rate",
        params={"alpha0": a0_log, "v0": v0_log,
                "alpha0_refined": float(p_ref[0]), "v0_refined": float(p_ref[1])},
        stderr={"alpha0": se_a0_log, "v0": se_v0_log,
                "alpha0_refined": float(se_ref[0]), "v0_refined": float(se_ref[1])},
        rmse=rmse, resid_mean=rmean, resid_var=rvar,
        n_points=int(v.size), n_params=2, converged=conv, notes=notes)


TAU_STARTS = tuple(10.0 ** k for k in np.arange(0.0, 5.01, 0.5))


def fit_log_growth(t, y, lower_bound_a=None):
    """Fit y(t) = a + b*ln(1 + t/tau), multi-starting tau over 1..1e5 s.

    With ``lower_bound_a`` given, a solution below the bound is refit with
    a pinned there and flagged.
    """
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    if t.size < 4:
        raise FitError("log-growth fit needs at least 4 points")
    if np.any(t < 0):
        raise DomainError("times must be non-negative")
    if np.ptp(y) == 0.0:
        return FitResult(model="log_growth",
                         params={"a": float(y.mean()), "b": 0.0, "tau": float("nan")},
                         stderr={"a": 0.0, "b": 0.0, "tau": float("nan")},
                         rmse=0.0, resid_mean=0.0, resid_var=0.0,
                         n_points=int(t.size), n_params=3, converged=True,
                         notes=["constant data: tau unidentifiable"])

    def basis(tau):
        return np.log1p(t / tau)

    def resid3(p):
        tau = math.exp(min(max(p[2], -40.0), 40.0))
        return p[0] + p[1] * np.log1p(t / tau) - y

    best = None
    for tau0 in TAU_STARTS:
        design = np.column_stack([np.ones_like(t), basis(tau0)])
        (a0, b0), *_ = np.linalg.lstsq(design, y, rcond=None)
        p, cost, conv = _lm(resid3, [a0, b0, math.log(tau0)])
        if np.exp(p[2]) <= 0 or not np.isfinite(cost):
            continue
        if best is None or cost < best[1]:
            best = (p, cost, conv)
    if best is None:
        raise FitError("log-growth fit failed from every start")
    p, cost, conv = best
    a, b, tau = float(p[0]), float(p[1]), float(math.exp(p[2]))
    notes = []

    if lower_bound_a is not None and a < lower_bound_a:
        notes.append(f"a at lower bound {lower_bound_a}")
        a = float(lower_bound_a)

        def resid2(q):
            tau_q = math.exp(min(max(q[1], -40.0), 40.0))
            return a + q[0] * np.log1p(t / tau_q) - y

        best2 = None
        for tau0 in TAU_STARTS:
            b0 = float(np.dot(basis(tau0), y - a) / max(np.dot(basis(tau0), basis(tau0)), 1e-300))
            q, cost2, conv2 = _lm(resid2, [b0, math.log(tau0)])
            if best2 is None or cost2 < best2[1]:
                best2 = (q, cost2, conv2)
        q, cost, conv = best2
        b, tau = float(q[0]), float(math.exp(q[1]))
        cov = _lm_covariance(resid2, q, cost, t.size)
        se = {"a": 0.0, "b": float(np.sqrt(abs(cov[0, 0]))),
              "tau": float(tau * np.sqrt(abs(cov[1, 1])))}
    else:
        cov = _lm_covariance(resid3, p, cost, t.size)
        se = {"a": float(np.sqrt(abs(cov[0, 0]))),
              "b": float(np.sqrt(abs(cov[1, 1]))),
              "tau": float(tau * np.sqrt(abs(cov[2, 2])))}

    resid = a + b * np.log1p(t / tau) - y
    rmse, rmean, rvar = _residual_stats(resid)
    return FitResult(model="log_growth",
                     params={"a": a, "b": b, "tau": tau}, stderr=se,
                     rmse=rmse, resid_mean=rmean, resid_var=rvar,
                     n_points=int(t.size), n_params=3, converged=conv,
                     notes=notes)


D_STARTS = tuple(np.arange(0.1, 1.01, 0.1))


def fit_power_law(t, y):
    """Fit y(t) = a + c*t^d, multi-starting the exponent on (0, 1]."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    if t.size < 4:
        raise FitError("power-law fit needs at least 4 points")
    if np.any(t < 0):
        raise DomainError("times must be non-negative")

    def resid(p):
        return p[0] + p[1] * np.power(np.maximum(t, 0.0), p[2]) - y

    best = None
    for d0 in D_STARTS:
        design = np.column_stack([np.ones_like(t), np.power(t, d0)])
        (a0, c0), *_ = np.linalg.lstsq(design, y, rcond=None)
        p, cost, conv = _lm(resid, [a0, c0, d0])
        if not np.isfinite(cost) or p[2] <= 0:
            continue
        if best is None or cost < best[1]:
            best = (p, cost, conv)
    if best is None:
        raise FitError("power-law fit failed from every start")
    p, cost, conv = best
    cov = _lm_covariance(resid, p, cost, t.size)
    se = np.sqrt(np.abs(np.diag(cov)))
    res = resid(p)
    rmse, rmean, rvar = _residual_stats(res)
    return FitResult(model="power_law",
                     params={"a": float(p[0]), "c": float(p[1]), "d": float(p[2])},
                     stderr={"a": float(se[0]), "c": float(se[1]), "d": float(se[2])},
                     rmse=rmse, resid_mean=rmean, resid_var=rvar,
                     n_points=int(t.size), n_params=3, converged=conv)


def fit_simmons(temperatures, conductances, normalize_at_tref=False, tref=297.0):
    """Fit G(T) = G0*(1 + (T/T0)^2).

    The model is linear in (G0, G0/T0^2); the direct solution seeds an LM
    polish that supplies the (G0, T0) covariance.
    """
    temp = np.asarray(temperatures, float)
    g = np.asarray(conductances, float)
    if temp.size < 3:
        raise FitError("Simmons fit needs at least 3 points")
    if np.any(temp < 0) or np.any(g <= 0):
        raise DomainError("temperatures must be >= 0 and conductances > 0")
    if np.ptp(temp) == 0.0:
        raise FitError("underdetermined: all temperatures identical")
    if normalize_at_tref:
        g = g / float(np.interp(tref, temp[np.argsort(temp)],
                                g[np.argsort(temp)]))
    design = np.column_stack([np.ones_like(temp), temp ** 2])
    (c0, c1), *_ = np.linalg.lstsq(design, g, rcond=None)
    notes = []
    if c1 <= 0 or c0 <= 0 or math.sqrt(abs(c0 / c1)) > 1e6:
        t0 = float("inf")
        resid = c0 - g
        rmse, rmean, rvar = _residual_stats(resid)
        return FitResult(model="simmons",
                         params={"g0": float(c0), "t0": t0},
                         stderr={"g0": float("nan"), "t0": float("nan")},
                         rmse=rmse, resid_mean=rmean, resid_var=rvar,
                         n_points=int(temp.size), n_params=2, converged=True,
                         notes=["t0 unidentifiable: no curvature in G(T)"])

    def resid_fn(p):
        return p[0] * (1.0 + (temp / p[1]) ** 2) - g

    p, cost, conv = _lm(resid_fn, [c0, math.sqrt(c0 / c1)])
    cov = _lm_covariance(resid_fn, p, cost, temp.size)
    se = np.sqrt(np.abs(np.diag(cov)))
    res = resid_fn(p)
    rmse, rmean, rvar = _residual_stats(res)
    return FitResult(model="simmons",
                     params={"g0": float(p[0]), "t0": float(p[1])},
                     stderr={"g0": float(se[0]), "t0": float(se[1])},
                     rmse=rmse, resid_mean=rmean, resid_var=rvar,
                     n_points=int(temp.size), n_params=2, converged=conv,
                     notes=notes)


def compare_models(results, epsilon=0.05):
    """Rank fits by RMSE; prefer the lowest-parameter model within epsilon.

    epsilon is in the units of the fitted quantity (0.05 percentage points
    for percent-unit manipulation fits; pass 5e-4 for fractional data).
    """
    rows = []
    notes = []
    usable = []
    for res in results:
        rows.append((res.model, res.n_params, res.rmse, res.resid_mean,
                     res.resid_var))
        if res.converged and np.isfinite(res.rmse):
            usable.append(res)
        else:
            notes.append(f"{res.model} excluded: not converged")
    if not usable:
        raise FitError("no converged fits to compare")
    best_rmse = min(r.rmse for r in usable)
    candidates = [r for r in usable if r.rmse <= best_rmse + epsilon]
    preferred = min(candidates, key=lambda r: (r.n_params, r.rmse))
    return ModelComparison(rows=rows, preferred=preferred.model, notes=notes)


def relaxation_parameters(sessions, t_primes, fit_time_laws=False):
    """Slope/offset of total-vs-active manipulation at each elapsed time.

    For each t', the total resistance increase of every session is
    interpolated at t' seconds after its stop and regressed linearly on
    the session's active increase.
    """
    if len(sessions) < 3:
        raise FitError("need at least 3 sessions to separate slope and offset")
    dr_actives = [s.dr_active for s in sessions]
    if len(set(round(d, 12) for d in dr_actives)) < 3:
        raise FitError("sessions must span at least 3 distinct active changes")
    rows = []
    for tp in t_primes:
        totals = []
        for s in sessions:
            times = np.asarray(s.times, float)
            if tp > times[-1]:
                raise FitError(f"session does not cover t' = {tp} s")
            totals.append(float(np.interp(tp, times, np.asarray(s.dr_total, float))))
        lin = fit_linear(dr_actives, totals)
        rows.append({
            "t_prime": float(tp),
            "slope": lin.params["slope"], "slope_err": lin.stderr["slope"],
            "offset": lin.params["offset"], "offset_err": lin.stderr["offset"],
        })
    out = {"rows": rows}
    if fit_time_laws and len(rows) >= 4:
        tps = [r["t_prime"] for r in rows]
        out["slope_law"] = fit_log_growth(tps, [r["slope"] for r in rows],
                                          lower_bound_a=1.0)
        out["offset_law"] = fit_log_growth(tps, [r["offset"] for r in rows],
                                           lower_bound_a=0.0)
    return out


def to_ohmic(param, r0):
    """Convert a fractional rate into ohmic units by the trace's R(0)."""
    return param * r0
