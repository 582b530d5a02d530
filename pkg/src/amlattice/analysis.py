"""Model fitting: echo curves, linear laws, tunneling scaling and gravimetry.

The nonlinear fits use a small Levenberg-Marquardt solver with analytic
Jacobians; :func:`numerical_jacobian` is kept for cross-checks.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .units import HBAR, PhysicalParams

LM_MAX_ITER = 200


@dataclass
class FitResult:
    params: dict
    errors: dict
    residual_rms: float
    converged: bool
    iterations: int
    covariance: np.ndarray | None = None
    flags: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.params[key]

    def to_dict(self) -> dict:
        return {
            "params": {k: float(v) for k, v in self.params.items()},
            "errors": {k: float(v) for k, v in self.errors.items()},
            "residual_rms": float(self.residual_rms),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "flags": list(self.flags),
            "stats": {k: float(v) for k, v in self.stats.items()},
        }


class FitError(RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


def numerical_jacobian(model, p, x, h=1e-6):
    p = np.asarray(p, dtype=float)
    cols = []
    for i in range(len(p)):
        step = h * max(1.0, abs(p[i]))
        up, dn = p.copy(), p.copy()
        up[i] += step
        dn[i] -= step
        cols.append((model(up, x) - model(dn, x)) / (2 * step))
    return np.array(cols).T


def levenberg_marquardt(model, jac, p0, x, y, max_iter=LM_MAX_ITER, xtol=1e-15, ftol=1e-15):
    """Damped Gauss-Newton minimisation of sum (model(p, x) - y)^2.

    Returns ``(p, jacobian_at_p, iterations, converged)``.
    """
    p = np.asarray(p0, dtype=float)
    r = model(p, x) - y
    cost = r @ r
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = jac(p, x)
        g = J.T @ r
        A = J.T @ J
        improved = False
        while lam < 1e16:
            step = np.linalg.solve(A + lam * np.diag(np.maximum(np.diag(A), 1e-300)), -g)
            p_new = p + step
            r_new = model(p_new, x) - y
            cost_new = r_new @ r_new
            if np.isfinite(cost_new) and cost_new <= cost:
                improved = True
                break
            lam *= 10
        if not improved:
            converged = True  # no descent direction left: at a minimum
            break
        small_step = np.linalg.norm(step) <= xtol * (np.linalg.norm(p) + xtol)
        small_gain = cost - cost_new <= ftol * max(cost, 1e-300)
        p, r, cost = p_new, r_new, cost_new
        lam = max(lam / 10, 1e-12)
        if small_step or small_gain or cost == 0:
            converged = True
            break
    return p, jac(p, x), it, converged


def _covariance(J, resid, n_params):
    dof = max(len(resid) - n_params, 1)
    s2 = resid @ resid / dof
    try:
        return s2 * np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError:
        return np.full((n_params, n_params), np.inf)


# --- echo curve -----------------------------------------------------------------

def echo_model(p, t):
    s0, s1, tau = p
    return np.sqrt(s0**2 + s1**2 * np.cos(np.pi * t / tau) ** 2)


def echo_jacobian(p, t):
    s0, s1, tau = p
    c = np.cos(np.pi * t / tau)
    s = np.sin(np.pi * t / tau)
    sig = np.sqrt(s0**2 + s1**2 * c**2)
    sig = np.where(sig == 0, 1e-300, sig)
    return np.stack([s0 / sig, s1 * c**2 / sig, s1**2 * c * s * np.pi * t / (tau**2 * sig)], axis=1)


def dominant_period(t, y, oversample: int = 20, tie: float = 0.05):
    """Period of the strongest Fourier component of ``y`` sampled at ``t``.

    Frequencies are scanned from half a cycle over the record up to the
    mean-spacing Nyquist limit.  Spectral peaks within ``tie`` (relative)
    of the strongest count as ties and the lowest frequency wins.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float) - np.mean(y)
    n = len(t)
    span = (t.max() - t.min()) * n / (n - 1)
    nyq = 0.5 * n / span
    freqs = np.arange(0.5 / span, nyq, 1.0 / (oversample * span))
    power = np.abs(np.exp(-2j * np.pi * np.outer(freqs, t)) @ y) ** 2
    peak = np.r_[power[0] >= power[1], (power[1:-1] >= power[:-2]) & (power[1:-1] >= power[2:]),
                 power[-1] >= power[-2]]
    best = np.flatnonzero(peak & (power >= (1 - tie) * power.max()))[0]
    return 1.0 / freqs[best]


def fit_echo(t_fr, sigma, tau_guess: float | None = None) -> FitResult:
    """Fit sigma(t) = sqrt(sigma0^2 + sigma1^2 cos^2(pi t / tau))."""
    t = np.asarray(t_fr, dtype=float)
    y = np.asarray(sigma, dtype=float)
    if len(t) < 8:
        raise ValueError("need at least 8 points")
    y2 = y**2
    flags = []
    if np.ptp(y2) <= 1e-12 * max(np.max(y2), 1e-300):
        flags.append("flat signal: sigma1 ~ 0, period unidentifiable")
        s0 = float(np.sqrt(np.mean(y2)))
        return FitResult({"sigma0": s0, "sigma1": 0.0, "tau": math.nan},
                         {"sigma0": 0.0, "sigma1": math.inf, "tau": math.inf},
                         float(np.std(y)), False, 0, None, flags)
    # sigma^2 oscillates at frequency 1 / tau
    tau0 = tau_guess or dominant_period(t, y2)
    p0 = [math.sqrt(max(y2.min(), 1e-300)), math.sqrt(np.ptp(y2)), tau0]
    p, J, it, ok = levenberg_marquardt(echo_model, echo_jacobian, p0, t, y)
    resid = echo_model(p, t) - y
    cov = _covariance(J, resid, 3)
    p = np.array([abs(p[0]), abs(p[1]), p[2]])
    if np.ptp(t) < p[2]:
        flags.append("scan spans less than one period")
    if not ok:
        flags.append("not converged")
    err = np.sqrt(np.maximum(np.diag(cov), 0))
    names = ("sigma0", "sigma1", "tau")
    return FitResult(dict(zip(names, p)), dict(zip(names, err)),
                     float(np.sqrt(np.mean(resid**2))), ok, it, cov, flags)


# --- linear law through the origin ----------------------------------------------

def fit_linear_through_origin(x, y, weights=None) -> FitResult:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3:
        raise ValueError("need at least 3 points")
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    sxx = np.sum(w * x * x)
    if sxx == 0:
        raise ValueError("all x are zero; slope undefined")
    slope = np.sum(w * x * y) / sxx
    resid = y - slope * x
    dof = max(len(x) - 1, 1)
    s2 = np.sum(w * resid**2) / dof
    err = math.sqrt(s2 / sxx)
    ybar = np.sum(w * y) / np.sum(w)
    ss_tot = np.sum(w * (y - ybar) ** 2)
    ss_res = np.sum(w * resid**2)
    flags = []
    scale = np.max(np.abs(y))
    if scale == 0 or abs(slope) * np.max(np.abs(x)) <= 1e-12 * max(scale, 1e-300):
        flags.append("zero signal: slope consistent with 0")
        r2 = math.nan
        rel = math.inf
    else:
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
        rel = err / abs(slope)
    return FitResult({"slope": float(slope)}, {"slope": float(err)},
                     float(np.sqrt(np.mean(resid**2))), True, 1, None, flags,
                     {"r2": float(r2), "relative_error": float(rel)})


# --- tunneling-rate scaling -----------------------------------------------------

def fit_J_scaling(depth, ell, J, alpha=1.0, method: str = "two_stage") -> FitResult:
    """Fit |J| = A alpha U0 exp(-beta2 U0) exp(-beta1 (ell - 1) U0).

    ``method="two_stage"`` fits A and beta2 on the ell = 1 samples, then
    beta1 on the ell > 1 residuals of that model (through the origin);
    ``"joint"`` does one log-linear regression on all samples.
    """
    U = np.asarray(depth, dtype=float)
    L = np.asarray(ell, dtype=float)
    Jv = np.asarray(J, dtype=float)
    a = np.broadcast_to(np.asarray(alpha, dtype=float), U.shape)
    flags = []
    ok = Jv > 0
    if not np.all(ok):
        warnings.warn(f"{np.sum(~ok)} non-positive J samples excluded", stacklevel=2)
        flags.append("non-positive samples excluded")
        U, L, Jv, a = U[ok], L[ok], Jv[ok], a[ok]
    y = np.log(Jv / (a * U))
    multi = len(np.unique(L)) > 1
    if not multi:
        flags.append("single ell: beta1 unidentifiable")
    if method == "joint" or not np.any(L == 1):
        cols = [np.ones_like(U), -U] + ([-(L - 1) * U] if multi else [])
        A = np.stack(cols, axis=1)
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        resid = y - A @ coef
        cov = _covariance(A, resid, A.shape[1])
        logA, b2 = coef[0], coef[1]
        b1 = coef[2] if multi else math.nan
        e = np.sqrt(np.maximum(np.diag(cov), 0))
        errs = (e[0], e[1], e[2] if multi else math.inf)
    elif method == "two_stage":
        one = L == 1
        if np.sum(one) < 2:
            raise ValueError("two-stage fit needs at least two ell = 1 samples")
        A1 = np.stack([np.ones(np.sum(one)), -U[one]], axis=1)
        c1, *_ = np.linalg.lstsq(A1, y[one], rcond=None)
        r1 = y[one] - A1 @ c1
        cov1 = _covariance(A1, r1, 2)
        logA, b2 = c1
        resid = [r1]
        if multi:
            x = -(L[~one] - 1) * U[~one]
            r = y[~one] - (logA - b2 * U[~one])
            b1 = float(x @ r / (x @ x))
            r2 = r - b1 * x
            resid.append(r2)
            e1 = math.sqrt((r2 @ r2) / max(len(r2) - 1, 1) / (x @ x))
        else:
            b1, e1 = math.nan, math.inf
        resid = np.concatenate(resid)
        e = np.sqrt(np.maximum(np.diag(cov1), 0))
        errs = (e[0], e[1], e1)
    else:
        raise ValueError(f"unknown method {method!r}")
    pref = math.exp(logA)
    return FitResult(
        {"prefactor": pref, "beta1": float(b1), "beta2": float(b2)},
        {"prefactor": pref * errs[0], "beta1": float(errs[2]), "beta2": float(errs[1])},
        float(np.sqrt(np.mean(resid**2))), True, 1, None, flags,
        {"n_samples": float(len(U))},
    )


# --- gravimetry -----------------------------------------------------------------

def g_from_bloch_period(tau_b: float, params: PhysicalParams) -> float:
    d = params.lattice_wavelength / 2
    return 2 * math.pi * HBAR / (params.atomic_mass * d * tau_b)


def estimate_g(t_fr_s, sigma, params: PhysicalParams, ell: int,
               tau_guess: float | None = None) -> FitResult:
    """Local gravity from an echo scan with freezing times in seconds.

    The fitted echo period is tau_B / ell, and g = 2 pi hbar / (m d tau_B).
    """
    fit = fit_echo(t_fr_s, sigma, tau_guess)
    if not math.isfinite(fit["tau"]):
        raise FitError("echo period unidentifiable; cannot estimate g", fit)
    tau_b = ell * fit["tau"]
    g = g_from_bloch_period(tau_b, params)
    rel = fit.errors["tau"] / fit["tau"]
    return FitResult({"g": g, "tau_B": tau_b, "rel_uncertainty": rel},
                     {"g": g * rel, "tau_B": ell * fit.errors["tau"], "rel_uncertainty": 0.0},
                     fit.residual_rms, fit.converged, fit.iterations, fit.covariance,
                     list(fit.flags), {"sigma0": fit["sigma0"], "sigma1": fit["sigma1"]})


# --- observables ------------------------------------------------------------------

def spread_rate(t, variance, t_min: float | None = None) -> float:
    """Asymptotic growth rate of the RMS size, sqrt(c) of var = a + b t + c t^2."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(variance, dtype=float)
    m = np.ones_like(t, dtype=bool) if t_min is None else t >= t_min
    if np.sum(m) < 3:
        raise ValueError("need at least 3 samples for the spread rate")
    A = np.stack([np.ones(np.sum(m)), t[m], t[m] ** 2], axis=1)
    scale = np.array([1.0, t[m].max(), t[m].max() ** 2])
    coef, *_ = np.linalg.lstsq(A / scale, v[m], rcond=None)
    c = coef[2] / scale[2]
    return math.sqrt(c) if c > 0 else 0.0


def sinusoid_model(p, t):
    a, b, c, period = p
    w = 2 * np.pi * t / period
    return a * np.cos(w) + b * np.sin(w) + c


def sinusoid_jacobian(p, t):
    a, b, c, period = p
    w = 2 * np.pi * t / period
    dw = -w / period
    return np.stack([np.cos(w), np.sin(w), np.ones_like(t),
                     (-a * np.sin(w) + b * np.cos(w)) * dw], axis=1)


def fit_sinusoid(t, y, period_guess: float | None = None) -> FitResult:
    """y = a cos(2 pi t / P) + b sin(2 pi t / P) + c with free period P.

    ``phase`` is reported so that y = amp cos(2 pi t / P - phase) + c.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    P = period_guess or dominant_period(t, y)
    w = 2 * np.pi * t / P
    lin, *_ = np.linalg.lstsq(np.stack([np.cos(w), np.sin(w), np.ones_like(t)], 1), y, rcond=None)
    p, J, it, ok = levenberg_marquardt(sinusoid_model, sinusoid_jacobian, [*lin, P], t, y)
    resid = sinusoid_model(p, t) - y
    cov = _covariance(J, resid, 4)
    err = np.sqrt(np.maximum(np.diag(cov), 0))
    a, b, c, P = p
    amp = math.hypot(a, b)
    phase = math.atan2(b, a)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1 - (resid @ resid) / ss_tot if ss_tot > 0 else math.nan
    return FitResult({"a": a, "b": b, "offset": c, "period": P, "amplitude": amp, "phase": phase},
                     {"a": err[0], "b": err[1], "offset": err[2], "period": err[3]},
                     float(np.sqrt(np.mean(resid**2))), ok, it, cov, [], {"r2": float(r2)})
