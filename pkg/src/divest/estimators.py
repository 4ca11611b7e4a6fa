"""
Kernel M-estimators of the likelihood ratio ``g0 = p0 / q0`` and of the
divergences built from it.

Conventions used throughout: ``x`` is the sample drawn from Q, ``y`` the
sample drawn from P, both of size ``n``; ``lam`` is the penalty weight
(``lambda`` is reserved in Python).

* **M1** puts the RKHS structure on g itself. The dual over ``alpha > 0`` is
  ``-1 - mean(log(n alpha)) + ||sum_j alpha_j Phi(y_j) - mean_i Phi(x_i)||^2 / (2 lam)``
  and the ratio is recovered as ``g(t) = <w, Phi(t)>`` with
  ``w = (sum_j alpha_j Phi(y_j) - mean_i Phi(x_i)) / lam``.
* **M2** puts it on ``log g``. The dual is
  ``sum_i alpha_i log(n alpha_i) - alpha_i + ||sum_i alpha_i Phi(x_i) - mean_j Phi(y_j)||^2 / (2 lam)``
  with ``log g(t) = <w, Phi(t)>``, ``w = (mean_j Phi(y_j) - sum_i alpha_i Phi(x_i)) / lam``.
* **CHI2** fits ``g`` in the span of the pooled anchors by penalised least
  squares, which has a closed-form linear solve.

Hilbert-space elements are never materialised; every inner product goes
through the Gram matrices.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.spatial import cKDTree

from .errors import ArgumentError, InfeasibleError, NumericError
from .kernel import KernelSpec, as_point, as_points, gram, gram_blocks
from .solver import SolverConfig, SolverResult, minimize_positive

log = logging.getLogger(__name__)

LOG_FLOOR = 1e-12
MERGE_TOL = 1e-12


@dataclass(frozen=True)
class DivergenceEstimate:
    value: float
    estimator_id: str
    n: int
    lam: float | None
    sigma: float | None
    duality_gap: float | None = None
    solver_iterations: int | None = None
    converged: bool = True

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise NumericError(f"{self.estimator_id} produced a non-finite estimate")


def _paired_samples(x, y):
    x = as_points(x, "x_from_Q")
    y = as_points(y, "y_from_P")
    if x.shape[1] != y.shape[1]:
        raise ArgumentError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    if x.shape[0] != y.shape[0]:
        raise ArgumentError(
            f"equal sample sizes are required, got n_x={x.shape[0]} and n_y={y.shape[0]}"
        )
    return x, y


def _check_lam(lam):
    lam = float(lam)
    if not np.isfinite(lam) or lam <= 0:
        raise ArgumentError(f"lambda must be positive, got {lam!r}")
    return lam


def _eval_points(t, dim):
    """Return (points, single) where single marks a lone point input."""
    arr = np.asarray(t, dtype=float)
    if arr.ndim <= 1:
        return as_point(arr, dim=dim, name="t")[None, :], True
    pts = as_points(arr, "t")
    if pts.shape[1] != dim:
        raise ArgumentError(f"t: dimension {pts.shape[1]} does not match {dim}")
    return pts, False


# --------------------------------------------------------------------------
# M1: RKHS structure on g


class _M1Dual:
    def __init__(self, Kyy, b, c, lam):
        self.Kyy, self.b, self.c, self.lam = Kyy, b, c, lam
        self.n = b.shape[0]

    def sq_norm(self, a):
        # ||sum_j a_j Phi(y_j) - mean_i Phi(x_i)||^2
        return float(a @ (self.Kyy @ a) - 2.0 * (a @ self.b) + self.c)

    def value(self, a):
        return -1.0 - float(np.mean(np.log(self.n * a))) + self.sq_norm(a) / (2 * self.lam)

    def change(self, a, s):
        quad = 2.0 * (s @ (self.Kyy @ a - self.b)) + s @ (self.Kyy @ s)
        return float(-np.mean(np.log1p(s / a)) + quad / (2 * self.lam))

    def gradient(self, a):
        return -1.0 / (self.n * a) + (self.Kyy @ a - self.b) / self.lam

    def hessian(self, a):
        H = self.Kyy / self.lam
        H[np.diag_indices_from(H)] += 1.0 / (self.n * a * a)
        return H


@dataclass(frozen=True)
class RatioModelM1:
    alpha: np.ndarray
    x_anchors: np.ndarray
    y_anchors: np.ndarray
    lam: float
    kernel: KernelSpec
    primal_value: float
    dual_value: float
    solver: SolverResult

    @property
    def n(self):
        return self.alpha.shape[0]

    @property
    def converged(self):
        return self.solver.converged

    @property
    def duality_gap(self):
        return abs(self.primal_value + self.dual_value)

    def __call__(self, t):
        return m1_ratio_at(self, t)


def _m1_parts(x, y, kernel, alpha, lam):
    B = gram_blocks(kernel, x, y)
    n = alpha.shape[0]
    b = B.Kxy.sum(axis=0) / n
    c = float(B.Kxx.sum()) / n**2
    g_y = (B.Kyy @ alpha - b) / lam
    g_x = (B.Kxy @ alpha - B.Kxx.sum(axis=1) / n) / lam
    sq = float(alpha @ (B.Kyy @ alpha) - 2.0 * (alpha @ b) + c)
    return g_x, g_y, sq / lam**2


def _m1_primal(g_x, g_y, w_sq, lam):
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(g_y > 0, np.log(np.where(g_y > 0, g_y, 1.0)), -np.inf)
    return float(np.mean(g_x) - np.mean(logs) + 0.5 * lam * w_sq)


def fit_m1(x_from_Q, y_from_P, kernel: KernelSpec, lam: float, cfg: SolverConfig | None = None) -> RatioModelM1:
    """Fit the ratio with g in the Gaussian RKHS by solving the M1 dual."""
    x, y = _paired_samples(x_from_Q, y_from_P)
    lam = _check_lam(lam)
    n = x.shape[0]
    B = gram_blocks(kernel, x, y)
    dual = _M1Dual(B.Kyy, B.Kxy.sum(axis=0) / n, float(B.Kxx.sum()) / n**2, lam)
    res = minimize_positive(dual, np.full(n, 1.0 / n), cfg or SolverConfig())
    if not res.converged:
        log.warning("M1 dual did not converge (grad sup-norm %.3g after %d iterations)",
                    res.grad_sup_norm, res.iterations)
    a = res.alpha
    g_y = (B.Kyy @ a - dual.b) / lam
    g_x = (B.Kxy @ a - B.Kxx.sum(axis=1) / n) / lam
    primal = _m1_primal(g_x, g_y, dual.sq_norm(a) / lam**2, lam)
    return RatioModelM1(
        alpha=a, x_anchors=x, y_anchors=y, lam=lam, kernel=kernel,
        primal_value=primal, dual_value=res.objective, solver=res,
    )


def m1_ratio_at(model: RatioModelM1, t):
    """Evaluate the fitted ratio ``g(t)``; may be negative away from the sample."""
    pts, single = _eval_points(t, model.x_anchors.shape[1])
    val = (gram(model.kernel, pts, model.y_anchors) @ model.alpha
           - gram(model.kernel, pts, model.x_anchors).mean(axis=1)) / model.lam
    return float(val[0]) if single else val


def m1_kl_estimate(model: RatioModelM1) -> DivergenceEstimate:
    value = float(-np.mean(np.log(model.n * model.alpha)))
    return DivergenceEstimate(
        value=value, estimator_id="M1", n=model.n, lam=model.lam, sigma=model.kernel.sigma,
        duality_gap=model.duality_gap, solver_iterations=model.solver.iterations,
        converged=model.converged,
    )


@dataclass(frozen=True)
class M1Certificates:
    """Optimality residuals of a fitted M1 model (all should be ~0)."""

    duality_gap: float
    stationarity: float
    scaling: float
    penalty_gap: float
    w_sq_norm: float


def m1_certificates(model: RatioModelM1) -> M1Certificates:
    n, lam = model.n, model.lam
    g_x, g_y, w_sq = _m1_parts(model.x_anchors, model.y_anchors, model.kernel, model.alpha, lam)
    plug = float(np.mean(np.log(np.maximum(g_y, LOG_FLOOR))) - np.mean(g_x) + 1.0)
    return M1Certificates(
        duality_gap=abs(model.primal_value + model.dual_value) / max(1.0, abs(model.primal_value)),
        stationarity=float(np.max(np.abs(n * model.alpha * g_y - 1.0))),
        scaling=abs(float(np.mean(g_x)) + lam * w_sq - 1.0),
        penalty_gap=abs(plug - m1_kl_estimate(model).value - lam * w_sq),
        w_sq_norm=w_sq,
    )


# --------------------------------------------------------------------------
# M2: RKHS structure on log g


class _M2Dual:
    def __init__(self, Kxx, b, c, lam):
        self.Kxx, self.b, self.c, self.lam = Kxx, b, c, lam
        self.n = b.shape[0]

    def sq_norm(self, a):
        # ||sum_i a_i Phi(x_i) - mean_j Phi(y_j)||^2
        return float(a @ (self.Kxx @ a) - 2.0 * (a @ self.b) + self.c)

    def value(self, a):
        return float(np.sum(a * np.log(self.n * a) - a)) + self.sq_norm(a) / (2 * self.lam)

    def change(self, a, s):
        # (a+s) log(n(a+s)) - a log(na) = s log(n(a+s)) + a log1p(s/a)
        ent = np.sum(s * np.log(self.n * (a + s)) + a * np.log1p(s / a) - s)
        quad = 2.0 * (s @ (self.Kxx @ a - self.b)) + s @ (self.Kxx @ s)
        return float(ent + quad / (2 * self.lam))

    def gradient(self, a):
        return np.log(self.n * a) + (self.Kxx @ a - self.b) / self.lam

    def hessian(self, a):
        H = self.Kxx / self.lam
        H[np.diag_indices_from(H)] += 1.0 / a
        return H


@dataclass(frozen=True)
class RatioModelM2:
    alpha: np.ndarray
    x_anchors: np.ndarray
    y_anchors: np.ndarray
    lam: float
    kernel: KernelSpec
    primal_value: float
    dual_value: float
    solver: SolverResult

    @property
    def n(self):
        return self.alpha.shape[0]

    @property
    def converged(self):
        return self.solver.converged

    @property
    def duality_gap(self):
        return abs(self.primal_value + self.dual_value)

    def __call__(self, t):
        return np.exp(m2_log_ratio_at(self, t))


def fit_m2(x_from_Q, y_from_P, kernel: KernelSpec, lam: float, cfg: SolverConfig | None = None) -> RatioModelM2:
    """Fit ``log g`` in the Gaussian RKHS by solving the M2 dual."""
    x, y = _paired_samples(x_from_Q, y_from_P)
    lam = _check_lam(lam)
    n = x.shape[0]
    B = gram_blocks(kernel, x, y)
    dual = _M2Dual(B.Kxx, B.Kxy.sum(axis=1) / n, float(B.Kyy.sum()) / n**2, lam)
    res = minimize_positive(dual, np.full(n, 1.0 / n), cfg or SolverConfig())
    if not res.converged:
        log.warning("M2 dual did not converge (grad sup-norm %.3g after %d iterations)",
                    res.grad_sup_norm, res.iterations)
    a = res.alpha
    h_x = (dual.b - B.Kxx @ a) / lam
    h_y = (B.Kyy.mean(axis=1) - B.Kxy.T @ a) / lam
    primal = float(np.mean(np.exp(h_x)) - np.mean(h_y) + 0.5 * dual.sq_norm(a) / lam)
    return RatioModelM2(
        alpha=a, x_anchors=x, y_anchors=y, lam=lam, kernel=kernel,
        primal_value=primal, dual_value=res.objective, solver=res,
    )


def m2_log_ratio_at(model: RatioModelM2, t):
    """Evaluate ``log g(t) = <w, Phi(t)>`` for the fitted M2 model."""
    pts, single = _eval_points(t, model.x_anchors.shape[1])
    val = (gram(model.kernel, pts, model.y_anchors).mean(axis=1)
           - gram(model.kernel, pts, model.x_anchors) @ model.alpha) / model.lam
    return float(val[0]) if single else val


def m2_kl_estimate(model: RatioModelM2) -> DivergenceEstimate:
    a = model.alpha
    value = float(1.0 + np.sum(a * np.log(a) + a * np.log(model.n / np.e)))
    return DivergenceEstimate(
        value=value, estimator_id="M2", n=model.n, lam=model.lam, sigma=model.kernel.sigma,
        duality_gap=model.duality_gap, solver_iterations=model.solver.iterations,
        converged=model.converged,
    )


def m2_stationarity(model: RatioModelM2) -> float:
    """Largest ``|exp<w, Phi(x_i)> - n alpha_i|`` over the Q-sample."""
    g_x = np.exp(m2_log_ratio_at(model, model.x_anchors))
    return float(np.max(np.abs(g_x - model.n * model.alpha)))


# --------------------------------------------------------------------------
# chi-square: penalised least squares


@dataclass(frozen=True)
class RatioModelChi2:
    beta: np.ndarray
    anchors: np.ndarray
    lam: float
    kernel: KernelSpec
    residual: float
    jitter: float = 0.0

    def __call__(self, t):
        return chi2_ratio_at(self, t)


def merge_anchors(z, tol=MERGE_TOL):
    """Drop points lying within ``tol`` of an earlier point (order kept)."""
    z = as_points(z, "anchors")
    pairs = cKDTree(z).query_pairs(tol, p=np.inf, output_type="ndarray")
    if len(pairs) == 0:
        return z
    keep = np.ones(z.shape[0], dtype=bool)
    keep[pairs.max(axis=1)] = False
    return z[keep]


def chi2_system(x_from_Q, y_from_P, kernel: KernelSpec, lam: float):
    """Return (A, b, anchors) for the normal equations ``A beta = b``."""
    x = as_points(x_from_Q, "x_from_Q")
    y = as_points(y_from_P, "y_from_P")
    if x.shape[1] != y.shape[1]:
        raise ArgumentError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    lam = _check_lam(lam)
    z = merge_anchors(np.vstack([x, y]))
    Kzx = gram(kernel, z, x)
    A = (Kzx @ Kzx.T) / x.shape[0] + lam * gram(kernel, z)
    A = 0.5 * (A + A.T)
    b = gram(kernel, z, y).mean(axis=1)
    return A, b, z


def _solve_sym(A, b):
    scale = float(np.mean(np.diag(A))) or 1.0
    jit = 0.0
    while True:
        M = A if jit == 0 else A + jit * scale * np.eye(A.shape[0])
        try:
            with warnings.catch_warnings():
                # the system is routinely ill-conditioned; the residual is checked instead
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                beta = scipy.linalg.solve(M, b, assume_a="sym", check_finite=False)
            if np.all(np.isfinite(beta)):
                return beta, jit * scale
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            pass
        jit = 1e-10 if jit == 0 else jit * 10
        if jit > 1e-4:
            raise NumericError("chi-square normal equations are singular after jitter escalation")


def fit_chi2(x_from_Q, y_from_P, kernel: KernelSpec, lam: float) -> RatioModelChi2:
    A, b, z = chi2_system(x_from_Q, y_from_P, kernel, lam)
    beta, jit = _solve_sym(A, b)
    bnorm = float(np.linalg.norm(b))
    residual = float(np.linalg.norm(A @ beta - b)) / (bnorm if bnorm > 0 else 1.0)
    return RatioModelChi2(beta=beta, anchors=z, lam=float(lam), kernel=kernel,
                          residual=residual, jitter=jit)


def chi2_ratio_at(model: RatioModelChi2, t):
    pts, single = _eval_points(t, model.anchors.shape[1])
    val = gram(model.kernel, pts, model.anchors) @ model.beta
    return float(val[0]) if single else val


def chi2_divergence_estimate(model: RatioModelChi2, x_from_Q, y_from_P) -> DivergenceEstimate:
    x = as_points(x_from_Q, "x_from_Q")
    y = as_points(y_from_P, "y_from_P")
    g_x = chi2_ratio_at(model, x)
    g_y = chi2_ratio_at(model, y)
    value = float(2.0 * np.mean(g_y) - np.mean(g_x * g_x))
    return DivergenceEstimate(value=value, estimator_id="CHI2", n=x.shape[0],
                              lam=model.lam, sigma=model.kernel.sigma)


# --------------------------------------------------------------------------
# conjugates and the generic plug-in


def kl_conjugate(v):
    """Conjugate of ``-log``: ``-1 - log(-v)`` for ``v < 0``, else ``+inf``."""
    v = np.asarray(v, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(v < 0, -1.0 - np.log(np.where(v < 0, -v, 1.0)), np.inf)


def kl_conjugate_deriv(v):
    v = np.asarray(v, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(v < 0, -1.0 / v, np.inf)


def chi2_conjugate(v):
    """Conjugate of ``1/u``: ``-2 sqrt(-v)`` for ``v <= 0``, else ``+inf``."""
    v = np.asarray(v, dtype=float)
    return np.where(v <= 0, -2.0 * np.sqrt(np.where(v <= 0, -v, 0.0)), np.inf)


def chi2_conjugate_deriv(v):
    v = np.asarray(v, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(v < 0, 1.0 / np.sqrt(np.where(v < 0, -v, 1.0)), np.inf)


def plugin_dphi(f_on_y, f_on_x, phi_star) -> float:
    """Plug-in divergence ``mean(f over Q-sample) - mean(phi*(f) over P-sample)``.

    ``f_on_x`` holds the candidate's values at the Q-sample ``x`` and
    ``f_on_y`` its values at the P-sample ``y``.
    """
    f_on_x = np.asarray(f_on_x, dtype=float).ravel()
    f_on_y = np.asarray(f_on_y, dtype=float).ravel()
    conj = np.asarray(phi_star(f_on_y), dtype=float)
    bad = np.flatnonzero(~np.isfinite(conj))
    if bad.size:
        i = int(bad[0])
        raise InfeasibleError(f"phi* is infinite at P-sample index {i} (f = {f_on_y[i]!r})", index=i)
    return float(np.mean(f_on_x) - np.mean(conj))
