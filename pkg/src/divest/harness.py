"""
Convergence experiments: repeated fits over a grid of sample sizes, recorded
one row per (estimator, n, replication) and persisted as CSV.

Every cell draws its own data from a seed derived from
``(base_seed, estimator, n, replication)``, so a sweep is reproducible and
its rows do not depend on execution order or parallelism.
"""
from __future__ import annotations

import csv
import logging
import math
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .baselines import fit_partition
from .distributions import DistSpec, chi2_truth, derive_seed, kl_truth, sample
from .errors import ArgumentError, DivestError, ParseError
from .estimators import (
    DivergenceEstimate,
    chi2_divergence_estimate,
    fit_chi2,
    fit_m1,
    fit_m2,
    m1_kl_estimate,
    m2_kl_estimate,
)
from .kernel import KernelSpec, as_points, default_bandwidth, median_heuristic
from .metrics import error_summary, fit_rate
from .solver import SolverConfig

log = logging.getLogger(__name__)

CSV_HEADER = ("estimator", "n", "rep", "estimate", "truth", "abs_error", "iters", "gap", "runtime_ms")
THREADS_ENV = "DIVEST_THREADS"

DESK_N_GRID = (100, 200, 400, 800, 1600, 3200)
DESK_REPS = 50
FULL_N_GRID = (100, 200, 500, 1000, 2000, 5000, 10000)
FULL_REPS = 250

#: representative (P, Q) pairs in the spirit of the univariate and
#: multivariate experiments; not panel-exact reproductions
PRESET_PAIRS = {
    "gauss-shift": ("gauss:0,1", "gauss:1,1"),
    "beta": ("beta:1,2", "beta:2,2"),
    "mixture": ("mix:0.5*gauss:-2,1+0.5*gauss:2,1", "gauss:0,5"),
    "tgauss2": ("tgauss:1,2,-3,4", "tgauss:0,2,-3,4"),
    "tgauss3": ("tgauss:1,3,-3,4", "tgauss:0,3,-3,4"),
}


def parse_estimator(token: str) -> str:
    """Normalise ``m1``, ``m2``, ``chi2``, ``wkv`` or ``wkv:G`` to an estimator id."""
    tok = token.strip()
    low = tok.lower()
    if low in ("m1", "m2", "chi2"):
        return low.upper()
    if low == "wkv":
        return "WKV@1/2"
    m = re.fullmatch(r"wkv[:@](.+)", low)
    if m:
        if not 0 < _parse_gamma(m.group(1)) < 1:
            raise ArgumentError(f"gamma must lie in (0, 1), got {m.group(1)!r}")
        return f"WKV@{m.group(1)}"
    raise ArgumentError(f"unknown estimator {token!r}; expected m1, m2, chi2 or wkv[:gamma]")


def _parse_gamma(text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise ArgumentError(f"cannot parse gamma {text!r}") from None


def estimator_gamma(estimator_id: str) -> float:
    return _parse_gamma(estimator_id.split("@", 1)[1])


def resolve_sigma(sigma, x, y) -> float:
    """``'default'``: 0.1 in 1-D else median heuristic; ``'median'``; or a number."""
    if sigma == "default":
        return default_bandwidth(x, y)
    if sigma == "median":
        return median_heuristic(np.vstack([x, y]))
    return float(sigma)


def estimate_divergence(estimator_id: str, x_from_Q, y_from_P, sigma="default",
                        lambda_scale: float = 1.0, cfg: SolverConfig | None = None) -> DivergenceEstimate:
    """Fit one estimator and return its divergence estimate (KL, or chi-square for CHI2)."""
    x = as_points(x_from_Q, "x_from_Q")
    y = as_points(y_from_P, "y_from_P")
    if estimator_id.startswith("WKV"):
        part = fit_partition(x, y, estimator_gamma(estimator_id))
        return DivergenceEstimate(value=part.value, estimator_id="WKV", n=x.shape[0],
                                  lam=None, sigma=None)
    kernel = KernelSpec(resolve_sigma(sigma, x, y))
    lam = lambda_scale / x.shape[0]
    if estimator_id == "M1":
        return m1_kl_estimate(fit_m1(x, y, kernel, lam, cfg))
    if estimator_id == "M2":
        return m2_kl_estimate(fit_m2(x, y, kernel, lam, cfg))
    if estimator_id == "CHI2":
        return chi2_divergence_estimate(fit_chi2(x, y, kernel, lam), x, y)
    raise ArgumentError(f"unknown estimator id {estimator_id!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    p_spec: DistSpec
    q_spec: DistSpec
    estimators: tuple
    n_grid: tuple
    replications: int = FULL_REPS
    base_seed: int = 0
    lambda_scale: float = 1.0
    sigma: float | str = "default"
    output_path: str | None = None
    record_runtime: bool = False

    def __post_init__(self):
        ests = tuple(parse_estimator(e) for e in self.estimators)
        if not ests:
            raise ArgumentError("at least one estimator is required")
        object.__setattr__(self, "estimators", ests)
        grid = tuple(int(n) for n in self.n_grid)
        if not grid or any(n < 1 for n in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ArgumentError("n_grid must be strictly increasing positive integers")
        object.__setattr__(self, "n_grid", grid)
        if int(self.replications) < 1:
            raise ArgumentError("replications must be >= 1")
        if not self.lambda_scale > 0:
            raise ArgumentError("lambda_scale must be positive")
        if isinstance(self.sigma, str):
            if self.sigma not in ("default", "median"):
                raise ArgumentError("sigma must be a positive number, 'default' or 'median'")
        elif not float(self.sigma) > 0:
            raise ArgumentError("sigma must be positive")
        if int(self.base_seed) < 0:
            raise ArgumentError("base_seed must be nonnegative")


@dataclass(frozen=True)
class SweepRow:
    estimator: str
    n: int
    rep: int
    estimate: float
    truth: float
    abs_error: float
    iters: int | None = None
    gap: float | None = None
    runtime_ms: float | None = None

    @property
    def failed(self):
        return math.isnan(self.estimate)


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def for_estimator(self, estimator):
        return [r for r in self.rows if r.estimator == estimator]


def _truths(cfg):
    out = {}
    for kind, fn in (("KL", kl_truth), ("CHI2", chi2_truth)):
        if kind == "CHI2" and "CHI2" not in cfg.estimators:
            continue
        if kind == "KL" and all(e == "CHI2" for e in cfg.estimators):
            continue
        try:
            t = fn(cfg.p_spec, cfg.q_spec)
            if t.approximate:
                log.info("%s truth for %s vs %s is a Monte Carlo approximation", kind, cfg.p_spec, cfg.q_spec)
            out[kind] = t.value
        except DivestError as exc:
            log.warning("no %s truth available: %s", kind, exc)
            out[kind] = math.nan
    return out


def run_cell(cfg: ExperimentConfig, estimator: str, n: int, rep: int, truth: float) -> SweepRow:
    t0 = time.perf_counter()
    try:
        y = sample(cfg.p_spec, n, derive_seed(cfg.base_seed, estimator, n, rep, 0))
        x = sample(cfg.q_spec, n, derive_seed(cfg.base_seed, estimator, n, rep, 1))
        est = estimate_divergence(estimator, x, y, cfg.sigma, cfg.lambda_scale)
        value, iters, gap = est.value, est.solver_iterations, est.duality_gap
    except (DivestError, np.linalg.LinAlgError) as exc:
        log.warning("%s n=%d rep=%d failed: %s", estimator, n, rep, exc)
        value, iters, gap = math.nan, None, None
    runtime = (time.perf_counter() - t0) * 1e3 if cfg.record_runtime else None
    return SweepRow(estimator, n, rep, value, truth, abs(value - truth), iters, gap, runtime)


def _threads():
    raw = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_sweep(cfg: ExperimentConfig) -> SweepResult:
    truths = _truths(cfg)
    cells = [(e, n, r) for e in sorted(cfg.estimators) for n in cfg.n_grid
             for r in range(int(cfg.replications))]

    def work(cell):
        e, n, r = cell
        return run_cell(cfg, e, n, r, truths["CHI2" if e == "CHI2" else "KL"])

    workers = _threads()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(work, cells))
    else:
        rows = [work(c) for c in cells]
    rows.sort(key=lambda r: (r.estimator, r.n, r.rep))
    result = SweepResult(rows)
    if cfg.output_path:
        write_csv(result, cfg.output_path)
    return result


# --------------------------------------------------------------------------
# persistence


def _fmt_float(v):
    return "" if v is None else repr(float(v))


def write_csv(result: SweepResult, path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in result.rows:
                w.writerow([
                    r.estimator, r.n, r.rep, _fmt_float(r.estimate), _fmt_float(r.truth),
                    _fmt_float(r.abs_error), "" if r.iters is None else r.iters,
                    _fmt_float(r.gap), _fmt_float(r.runtime_ms),
                ])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _opt(text, conv):
    return None if text == "" else conv(text)


def read_csv(path) -> SweepResult:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ParseError(f"{path}: unexpected header {header!r}", line=1)
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(CSV_HEADER):
                raise ParseError(f"{path}: expected {len(CSV_HEADER)} fields", line=lineno)
            try:
                rows.append(SweepRow(
                    rec[0], int(rec[1]), int(rec[2]), float(rec[3]), float(rec[4]), float(rec[5]),
                    _opt(rec[6], int), _opt(rec[7], float), _opt(rec[8], float),
                ))
            except ValueError as exc:
                raise ParseError(f"{path}: {exc}", line=lineno) from None
    return SweepResult(rows)


def read_samples(path) -> np.ndarray:
    """Read one point per line; coordinates separated by commas or whitespace."""
    pts = []
    arity = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            toks = [t for t in re.split(r"[,\s]+", text) if t]
            try:
                row = [float(t) for t in toks]
            except ValueError:
                raise ParseError(f"{path}: non-numeric token in {text!r}", line=lineno) from None
            if not all(math.isfinite(v) for v in row):
                raise ParseError(f"{path}: non-finite coordinate", line=lineno)
            if arity is None:
                arity = len(row)
            elif len(row) != arity:
                raise ParseError(f"{path}: expected {arity} coordinates, found {len(row)}", line=lineno)
            pts.append(row)
    if not pts:
        raise ParseError(f"{path}: no sample points found")
    return np.array(pts, dtype=float)


# --------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class CellAggregate:
    estimator: str
    n: int
    count: int
    failures: int
    median_estimate: float
    q10: float
    q90: float
    median_abs_error: float
    mse: float


def aggregate(result: SweepResult) -> list:
    groups = {}
    for r in result.rows:
        groups.setdefault((r.estimator, r.n), []).append(r)
    out = []
    for (est, n), rows in sorted(groups.items()):
        ok = [r for r in rows if not r.failed]
        if ok:
            s = error_summary([r.estimate for r in ok], ok[0].truth)
            out.append(CellAggregate(est, n, len(rows), len(rows) - len(ok),
                                     float(np.median([r.estimate for r in ok])), s.q10, s.q90,
                                     s.median_abs_error, s.mse))
        else:
            nan = math.nan
            out.append(CellAggregate(est, n, len(rows), len(rows), nan, nan, nan, nan, nan))
    return out


def rate_slopes(result: SweepResult) -> dict:
    """Log-log slope of the median absolute error in n, per estimator."""
    by_est = {}
    for a in aggregate(result):
        by_est.setdefault(a.estimator, []).append(a)
    slopes = {}
    for est, aggs in by_est.items():
        ns = [a.n for a in aggs if a.median_abs_error > 0]
        errs = [a.median_abs_error for a in aggs if a.median_abs_error > 0]
        try:
            slopes[est] = fit_rate(ns, errs)
        except ArgumentError:
            slopes[est] = math.nan
    return slopes


def write_aggregate_csv(aggs, path) -> None:
    cols = ("estimator", "n", "count", "failures", "median_estimate", "q10", "q90",
            "median_abs_error", "mse")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for a in aggs:
            w.writerow([getattr(a, c) if c in ("estimator", "n", "count", "failures")
                        else repr(float(getattr(a, c))) for c in cols])
