"""
Damped Newton minimisation of smooth strictly convex functions on the open
positive orthant.

Positivity is enforced by the line search alone: a trial point is accepted
only if every coordinate is strictly positive and the Armijo condition holds.
This terminates for objectives carrying their own barrier (``-log a`` or
``a log a`` terms), which is the case for both kernel duals.

Close to the optimum the predicted decrease drops below the rounding error of
``value``.  Objectives may therefore supply ``change(alpha, step)``, returning
``value(alpha + step) - value(alpha)`` computed without cancellation; the line
search uses it when present.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
import scipy.linalg

from .errors import ArgumentError

_MAX_BACKTRACKS = 60
_MAX_JITTER = 1e-4


class ConvexObjective(Protocol):
    def value(self, alpha: np.ndarray) -> float: ...

    def gradient(self, alpha: np.ndarray) -> np.ndarray: ...

    def hessian(self, alpha: np.ndarray) -> np.ndarray: ...

    # optional: def change(self, alpha, step) -> float


@dataclass(frozen=True)
class SolverConfig:
    grad_tol: float = 1e-8
    max_iters: int = 200
    armijo_c: float = 1e-4
    backtrack_ratio: float = 0.5
    hessian_jitter: float = 1e-10

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ArgumentError("grad_tol must be positive")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ArgumentError("max_iters must be a positive integer")
        if not 0 < self.armijo_c < 1:
            raise ArgumentError("armijo_c must lie in (0, 1)")
        if not 0 < self.backtrack_ratio < 1:
            raise ArgumentError("backtrack_ratio must lie in (0, 1)")
        if not self.hessian_jitter >= 0:
            raise ArgumentError("hessian_jitter must be nonnegative")


@dataclass(frozen=True)
class SolverResult:
    """Outcome of :func:`minimize_positive`.

    ``grad_sup_norm`` is the sup-norm of the gradient at ``alpha``; converged
    means it fell below ``grad_tol * max(1, |objective|)``.
    ``history`` holds every accepted objective value, starting at ``alpha0``.
    """

    alpha: np.ndarray
    objective: float
    grad_sup_norm: float
    iterations: int
    converged: bool
    gradient_steps: int = 0
    history: tuple = field(default=(), repr=False)


def _newton_direction(H, g, jitter):
    n = g.shape[0]
    eye = np.eye(n)
    jit = jitter
    while True:
        try:
            c = scipy.linalg.cho_factor(H + jit * eye if jit > 0 else H, check_finite=False)
            d = -scipy.linalg.cho_solve(c, g, check_finite=False)
            if np.all(np.isfinite(d)):
                return d
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            pass
        jit = 1e-12 if jit == 0 else jit * 10
        if jit > _MAX_JITTER:
            return None


def minimize_positive(obj: ConvexObjective, alpha0, cfg: SolverConfig | None = None) -> SolverResult:
    cfg = cfg or SolverConfig()
    a = np.array(alpha0, dtype=float).ravel()
    if a.size == 0 or not np.all(a > 0) or not np.all(np.isfinite(a)):
        raise ArgumentError("alpha0 must be finite and strictly positive")
    f = float(obj.value(a))
    g = np.asarray(obj.gradient(a), dtype=float)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise ArgumentError("objective or gradient is not finite at alpha0")

    change = getattr(obj, "change", None)
    history = [f]
    gsup = float(np.max(np.abs(g)))
    iters = 0
    grad_steps = 0
    converged = gsup <= cfg.grad_tol * max(1.0, abs(f))
    while not converged and iters < cfg.max_iters:
        d = _newton_direction(np.asarray(obj.hessian(a), dtype=float), g, cfg.hessian_jitter)
        if d is None or not g @ d < 0:
            d = -g
            grad_steps += 1
        slope = float(g @ d)
        t = 1.0
        accepted = False
        for _ in range(_MAX_BACKTRACKS):
            trial = a + t * d
            if np.all(trial > 0):
                if change is not None:
                    delta = float(change(a, t * d))
                else:
                    delta = float(obj.value(trial)) - f
                if np.isfinite(delta) and delta <= min(0.0, cfg.armijo_c * t * slope):
                    accepted = True
                    break
            t *= cfg.backtrack_ratio
        if not accepted:
            # no representable decrease left along d
            break
        a, f = trial, f + delta
        g = np.asarray(obj.gradient(a), dtype=float)
        history.append(f)
        iters += 1
        gsup = float(np.max(np.abs(g)))
        converged = gsup <= cfg.grad_tol * max(1.0, abs(f))

    return SolverResult(
        alpha=a,
        objective=float(obj.value(a)),
        grad_sup_norm=gsup,
        iterations=iters,
        converged=bool(converged),
        gradient_steps=grad_steps,
        history=tuple(history),
    )
