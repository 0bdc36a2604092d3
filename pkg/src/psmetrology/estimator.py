"""Estimators of g_delta from photon-count records.

Three estimators are provided:

* post-selection statistics only, inverting the closed form of p_f(g);
* meter only, inverting the split-detector imbalance of the post-selected photons;
* joint maximum likelihood over the three outcomes {L, R, perp}.

The likelihood variant ``"exact"`` uses the error-function half-plane model;
``"linearized"`` uses the first-order split-detector model. For the meter-only
estimator the linearized variant is the textbook readout
``d = sqrt(pi/2) delta_f (N_R - N_L)/(N_R + N_L)`` followed by ``d = f <k>/k0 + d0``.
"""
from __future__ import annotations

import enum
import math
import statistics
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import xlogy

from .errors import (
    EstimationError,
    IllConditioned,
    ImpossibleOutcome,
    NoInformation,
    NoPostSelectedPhotons,
    OutOfRange,
    TooFewTrials,
)
from .forward import Coefficients, OpticalSetup, coefficients, outcomes
from .qcore import PostSelectionMode
from .sampler import CountRecord

G_BOUND = 1.0
_SCAN = np.linspace(-G_BOUND, G_BOUND, 401)
SCORE_TOL = 1e-8


class EstimatorKind(enum.Enum):
    POSTSELECTION = "ps"
    METER = "meter"
    JOINT = "joint"


@dataclass(frozen=True)
class EstimateResult:
    g_delta_hat: float
    estimator_kind: EstimatorKind
    converged: bool
    log_likelihood_at_max: float
    n_used: float
    failure: str | None = None

    @classmethod
    def failed(cls, kind: EstimatorKind, n_used: float, exc: Exception) -> "EstimateResult":
        return cls(math.nan, kind, False, math.nan, n_used, failure=type(exc).__name__)


@dataclass(frozen=True)
class EnsembleSummary:
    mean: float
    std: float
    bias: float
    three_sigma: float
    n_trials: int
    n_failed: int


def _binary_loglik(n_yes, n_no, p, q):
    return float(xlogy(n_yes, p) + xlogy(n_no, q))


def estimate_from_postselection(
    rec: CountRecord,
    theta_i: float,
    mode: PostSelectionMode,
    setup: OpticalSetup,
    *,
    clamp: bool = False,
) -> EstimateResult:
    """Invert p_f(g) = p0 + cross (exp(-2 g_delta^2) - 1) for |g_delta|."""
    kind = EstimatorKind.POSTSELECTION
    co = coefficients(theta_i, mode, setup)
    if abs(co.cross) < 1e-12:
        raise NoInformation(f"p_f does not depend on g at theta_i = {theta_i!r}")
    if rec.n_total <= 0:
        raise NoInformation("empty record")
    p_hat = rec.n_postselected / rec.n_total
    em1 = (p_hat - co.p0) / co.cross
    # exact zeros of em1 come back as rounding noise of either sign
    if 0.0 < em1 <= 1e-12:
        em1 = 0.0
    if em1 > 0.0 or em1 <= -1.0:
        if not clamp:
            raise OutOfRange(f"observed p_f = {p_hat:.6g} outside the model range")
        g_hat = 0.0 if em1 > 0.0 else G_BOUND
    else:
        g_hat = math.sqrt(-math.log1p(em1) / 2.0)
    em1_fit = math.expm1(-2.0 * g_hat**2)
    p_fit, q_fit = co.p0 + co.cross * em1_fit, co.q0 - co.cross * em1_fit
    residual = abs(p_fit - p_hat)
    return EstimateResult(
        g_hat,
        kind,
        bool(residual < 1e-12),
        _binary_loglik(rec.n_postselected, rec.n_perp, p_fit, q_fit),
        rec.n_total,
    )


def _imbalance_model(co: Coefficients, g_delta, boundary: float, variant: str):
    out = outcomes(co, g_delta, boundary, variant)
    return (out.p_right - out.p_left) / (out.p_right + out.p_left)


@lru_cache(maxsize=1024)
def _monotone_window(co: Coefficients, boundary: float, variant: str) -> tuple[float, float, float]:
    """Monotone stretch of the imbalance model around g = 0.

    Returns ``(lo, hi, trend)`` with ``trend`` the sign of the slope. Interior
    edges are refined to the actual turning points of the model.
    """
    vals = _imbalance_model(co, _SCAN, boundary, variant)
    steps = np.sign(np.diff(vals))
    mid = len(_SCAN) // 2
    trend = float(steps[mid] if steps[mid] != 0 else steps[mid - 1])
    hi = mid
    while hi < len(steps) and steps[hi] == trend:
        hi += 1
    lo = mid - 1
    while lo >= 0 and steps[lo] == trend:
        lo -= 1
    x_lo, x_hi = float(_SCAN[lo + 1]), float(_SCAN[hi])
    step = float(_SCAN[1] - _SCAN[0])

    def model(x):
        return trend * float(_imbalance_model(co, x, boundary, variant))

    opts = {"xatol": 1e-13}
    if x_hi < G_BOUND:
        x_hi = float(minimize_scalar(lambda x: -model(x), bounds=(x_hi - step, x_hi + step),
                                     method="bounded", options=opts).x)
    if x_lo > -G_BOUND:
        x_lo = float(minimize_scalar(model, bounds=(x_lo - step, x_lo + step),
                                     method="bounded", options=opts).x)
    return x_lo, x_hi, trend


def estimate_from_meter(
    rec: CountRecord,
    theta_i: float,
    mode: PostSelectionMode,
    setup: OpticalSetup,
    variant: str = "exact",
    *,
    clamp: bool = False,
) -> EstimateResult:
    """Solve model imbalance(g) = (N_R - N_L)/(N_R + N_L) for signed g_delta."""
    kind = EstimatorKind.METER
    n_f = rec.n_postselected
    if n_f <= 0:
        raise NoPostSelectedPhotons("no photons passed the post-selection")
    co = coefficients(theta_i, mode, setup)
    # d(focal displacement)/d(g_delta) at g = 0, in units of delta_f
    sensitivity = abs(2.0 * co.drift / co.p0) if co.p0 > 0 else math.inf
    if sensitivity < 1e-6:
        raise IllConditioned(f"meter sensitivity {sensitivity:.2e} delta_f per unit g_delta")
    observed = (rec.n_right - rec.n_left) / n_f
    boundary = setup.boundary

    def resid(x):
        return float(_imbalance_model(co, x, boundary, variant)) - observed

    lo, hi, _ = _monotone_window(co, boundary, variant)
    r_lo, r_hi = resid(lo), resid(hi)
    if r_lo * r_hi > 0:
        if not clamp:
            raise OutOfRange(f"imbalance {observed:.6g} outside the monotone model range")
        g_hat = lo if abs(r_lo) < abs(r_hi) else hi
    elif r_lo == 0.0:
        g_hat = lo
    elif r_hi == 0.0:
        g_hat = hi
    else:
        g_hat = brentq(resid, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    residual = abs(resid(g_hat))
    out = outcomes(co, g_hat, boundary, variant)
    ll = float(xlogy(rec.n_right, out.p_right / out.p_f) + xlogy(rec.n_left, out.p_left / out.p_f))
    return EstimateResult(float(g_hat), kind, bool(residual < 1e-12), ll, n_f)


def _loglik_terms(co, x, boundary, variant, rec: CountRecord, strict: bool):
    out = outcomes(co, x, boundary, variant)
    probs = (out.p_right, out.p_left, out.p_perp)
    counts = (rec.n_right, rec.n_left, rec.n_perp)
    total = 0.0
    for n, p in zip(counts, probs):
        p = np.asarray(p, dtype=float)
        if n > 0:
            bad = p <= 0.0
            if np.any(bad):
                if strict:
                    raise ImpossibleOutcome("an outcome with positive count has zero model probability")
                p = np.where(bad, np.nan, p)
            total = total + n * np.log(p)
    if not strict:
        total = np.where(np.isnan(total), -np.inf, total)
    return total


def log_likelihood(
    g_delta: float,
    rec: CountRecord,
    theta_i: float,
    mode: PostSelectionMode,
    setup: OpticalSetup,
    variant: str = "exact",
) -> float:
    """ln L = N_R ln P_R + N_L ln P_L + N_perp ln(1 - p_f)."""
    co = coefficients(theta_i, mode, setup)
    return float(_loglik_terms(co, g_delta, setup.boundary, variant, rec, strict=True))


def score(
    g_delta: float,
    rec: CountRecord,
    theta_i: float,
    mode: PostSelectionMode,
    setup: OpticalSetup,
    variant: str = "exact",
) -> float:
    """Analytic derivative of the log-likelihood with respect to g_delta."""
    co = coefficients(theta_i, mode, setup)
    out = outcomes(co, g_delta, setup.boundary, variant)
    total = 0.0
    for n, p, dp in (
        (rec.n_right, out.p_right, out.dp_right),
        (rec.n_left, out.p_left, out.dp_left),
        (rec.n_perp, out.p_perp, out.dp_perp),
    ):
        if n > 0:
            total += n * dp / p
    return float(total)


def estimate_joint_mle(
    rec: CountRecord,
    theta_i: float,
    mode: PostSelectionMode,
    setup: OpticalSetup,
    variant: str = "exact",
) -> EstimateResult:
    """Maximize the three-outcome likelihood over g_delta in [-1, 1].

    A dense scan over the whole interval (which covers the starts -0.5, 0 and
    +0.5 and every basin between them) picks the best basin; bounded Brent search
    refines it and the analytic score is then driven to zero inside the basin.
    """
    kind = EstimatorKind.JOINT
    if rec.n_total <= 0:
        raise NoInformation("empty record")
    co = coefficients(theta_i, mode, setup)
    boundary = setup.boundary
    scan = _loglik_terms(co, _SCAN, boundary, variant, rec, strict=False)
    finite = np.isfinite(scan)
    if not np.any(finite):
        raise NoInformation("likelihood is zero over the whole search interval")
    top = float(np.max(scan[finite]))
    if top - float(np.min(scan[finite])) <= 1e-12 * (1.0 + abs(top)):
        raise NoInformation("likelihood is flat in g")
    i = int(np.argmax(np.where(finite, scan, -np.inf)))
    lo, hi = _SCAN[max(i - 1, 0)], _SCAN[min(i + 1, len(_SCAN) - 1)]

    def neg(x):
        return -float(_loglik_terms(co, x, boundary, variant, rec, strict=False))

    res = minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12, "maxiter": 500})
    g_hat = float(res.x)

    def sc(x):
        return score(x, rec, theta_i, mode, setup, variant)

    s_lo, s_hi = sc(lo), sc(hi)
    if s_lo > 0 > s_hi:
        g_hat = brentq(sc, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    at_bound = abs(abs(g_hat) - G_BOUND) < 1e-9
    converged = bool(res.success) and not at_bound and abs(sc(g_hat)) < SCORE_TOL
    return EstimateResult(g_hat, kind, converged, -neg(g_hat), rec.n_total)


ESTIMATORS = {
    EstimatorKind.POSTSELECTION: lambda rec, th, mode, setup, variant: estimate_from_postselection(rec, th, mode, setup),
    EstimatorKind.METER: lambda rec, th, mode, setup, variant: estimate_from_meter(rec, th, mode, setup, variant),
    EstimatorKind.JOINT: estimate_joint_mle,
}


def run_estimator(kind: EstimatorKind, rec, theta_i, mode, setup, variant="exact") -> EstimateResult:
    """Apply one estimator, turning per-record failures into a failed result."""
    try:
        return ESTIMATORS[kind](rec, theta_i, mode, setup, variant)
    except EstimationError as exc:
        return EstimateResult.failed(kind, rec.n_total, exc)


def summarize(estimates: list[EstimateResult], g_true: float) -> EnsembleSummary:
    good = [e.g_delta_hat for e in estimates if e.converged and math.isfinite(e.g_delta_hat)]
    n_failed = len(estimates) - len(good)
    if len(good) < 2:
        raise TooFewTrials(f"{len(good)} converged estimates out of {len(estimates)}")
    if any(e.estimator_kind is EstimatorKind.POSTSELECTION for e in estimates):
        g_true = abs(g_true)
    # correctly rounded: identical estimates give exactly zero spread
    mean = statistics.fmean(good)
    std = statistics.stdev(good)
    return EnsembleSummary(mean, std, mean - g_true, 3.0 * std, len(estimates), n_failed)
