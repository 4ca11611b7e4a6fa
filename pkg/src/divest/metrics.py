"""
Distances between an estimated ratio ``g`` and the true ratio ``g0``, plus
summaries of Monte Carlo error.

Population integrals are taken as averages over a single Q-sample; integrals
against P are rewritten with the importance weight ``g0 = dP/dQ``.  Because
the inequality ``d(g0, g) >= 2 h^2(g0, g)`` holds integrand by integrand,
this keeps it exact on any finite sample.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, InfeasibleError
from .kernel import as_points

CLAMP_FLOOR = 1e-12
CLAMP_FLAG_FRACTION = 0.01
DEFAULT_MC_POINTS = 10**5


@dataclass(frozen=True)
class MetricReport:
    hellinger_sq: float
    surrogate_d: float
    bregman_d: float | None
    mc_points: int
    clamp_count: int

    @property
    def flagged(self):
        return self.clamp_count > CLAMP_FLAG_FRACTION * self.mc_points


def _values(g, g0, q_sample):
    pts = as_points(q_sample, "q_sample")
    gv = np.asarray(g(pts), dtype=float).ravel()
    g0v = np.asarray(g0(pts), dtype=float).ravel()
    if gv.shape != g0v.shape or gv.shape[0] != pts.shape[0]:
        raise ArgumentError("ratio functions must return one value per sample point")
    low = ~(gv >= CLAMP_FLOOR)
    return np.where(low, CLAMP_FLOOR, gv), g0v, int(np.count_nonzero(low))


def hellinger_sq(g, g0, q_sample) -> float:
    """``0.5 * mean((sqrt(g0) - sqrt(g))**2)`` over the Q-sample."""
    gv, g0v, _ = _values(g, g0, q_sample)
    return float(0.5 * np.mean((np.sqrt(g0v) - np.sqrt(gv)) ** 2))


def surrogate_distance(g, g0, q_sample) -> float:
    """``mean(g - g0) - mean(g0 * log(g / g0))`` over the Q-sample."""
    gv, g0v, _ = _values(g, g0, q_sample)
    return float(np.mean((gv - g0v) - g0v * np.log(gv / g0v)))


def bregman_distance(f, f0, phi_star, phi_star_deriv, p_weights) -> float:
    """Bregman gap of ``phi_star`` between ``f`` and ``f0``, averaged with weights.

    ``p_weights`` are densities of P relative to the sampling measure: all ones
    for a P-sample, or ``g0(t)`` at the points of a Q-sample.  The result is
    ``mean(w * (phi*(f) - phi*(f0) - phi*'(f0) (f - f0)))``.
    """
    f = np.asarray(f, dtype=float).ravel()
    f0 = np.asarray(f0, dtype=float).ravel()
    w = np.broadcast_to(np.asarray(p_weights, dtype=float), f.shape)
    if f0.shape != f.shape:
        raise ArgumentError("f and f0 must have the same length")
    a, b, db = (np.asarray(v, dtype=float) for v in (phi_star(f), phi_star(f0), phi_star_deriv(f0)))
    for name, vals in (("f", a), ("f0", b), ("f0 (derivative)", db)):
        bad = np.flatnonzero(~np.isfinite(vals))
        if bad.size:
            raise InfeasibleError(f"phi* is infinite at {name}[{bad[0]}]", index=int(bad[0]))
    return float(np.mean(w * (a - b - db * (f - f0))))


def ratio_report(g, g0, q_sample, with_chi2: bool = False) -> MetricReport:
    gv, g0v, clamps = _values(g, g0, q_sample)
    h2 = float(0.5 * np.mean((np.sqrt(g0v) - np.sqrt(gv)) ** 2))
    d = float(np.mean((gv - g0v) - g0v * np.log(gv / g0v)))
    # chi-square Bregman gap reduces to the L2(Q) distance
    breg = float(np.mean((gv - g0v) ** 2)) if with_chi2 else None
    return MetricReport(h2, d, breg, gv.shape[0], clamps)


@dataclass(frozen=True)
class ErrorSummary:
    count: int
    bias: float
    median_abs_error: float
    mse: float
    q10: float
    q90: float


def error_summary(estimates, truth: float) -> ErrorSummary:
    est = np.asarray(estimates, dtype=float).ravel()
    if est.size == 0:
        raise ArgumentError("error_summary needs at least one estimate")
    err = est - truth
    q10, q90 = np.quantile(est, [0.1, 0.9])
    return ErrorSummary(
        count=int(est.size),
        bias=float(np.mean(err)),
        median_abs_error=float(np.median(np.abs(err))),
        mse=float(np.mean(err * err)),
        q10=float(q10),
        q90=float(q90),
    )


def fit_rate(ns, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(n)``."""
    ns = np.asarray(ns, dtype=float).ravel()
    errors = np.asarray(errors, dtype=float).ravel()
    if ns.shape != errors.shape or ns.size < 3:
        raise ArgumentError("fit_rate needs at least 3 (n, error) pairs")
    if np.any(errors <= 0) or np.any(ns <= 0) or not np.all(np.isfinite(errors)):
        raise ArgumentError("errors and sample sizes must be positive")
    lx, ly = np.log(ns), np.log(errors)
    lx = lx - lx.mean()
    return float(lx @ (ly - ly.mean()) / (lx @ lx))
