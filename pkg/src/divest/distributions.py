"""
Test distributions with samplers, densities and divergence oracles.

Families: diagonal Gaussians, box-truncated Gaussians, Beta, 1-D Gaussian
mixtures, and products of independent blocks.  Every family parses from and
formats to a short text form used on the command line::

    gauss:0,1                 N(0, 1)                      (mean,variance)
    gauss2:1,1|0,1            N(1,1) x N(0,1)              one group per coordinate
    tgauss:1,2                N(1, I_2) truncated to [-2, 4]^2
    tgauss:1,2,-3,4           same mean, box [-3, 4]^2
    beta:2,2                  Beta(2, 2)
    mix:0.5*gauss:0,1+0.5*gauss:3,1
    prod:beta:2,2&gauss:0,1   independent blocks
"""
from __future__ import annotations

import re
import zlib
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate, special, stats

from .errors import ArgumentError, ParseError, SamplingError
from .kernel import as_points

MIN_ACCEPTANCE = 1e-6
MC_ORACLE_SIZE = 10**6
QUAD_TOL = 1e-10
TRUNCATION_HALF_WIDTH = 3.0


def derive_seed(*words) -> int:
    """Mix integers and strings into a 64-bit seed, independent of call order."""
    ints = []
    for w in words:
        if isinstance(w, str):
            ints.append(zlib.crc32(w.encode("utf-8")))
        else:
            w = int(w)
            if w < 0:
                raise ArgumentError("seed components must be nonnegative")
            ints.extend([w & 0xFFFFFFFF, w >> 32])
    return int(np.random.SeedSequence(ints).generate_state(1, np.uint64)[0])


def _fmt(v):
    return repr(float(v)).removesuffix(".0") if float(v).is_integer() else repr(float(v))


class DistSpec:
    """Base class; subclasses set ``family`` and ``dim``."""

    family = "abstract"
    dim = 1

    def support(self):
        """Per-coordinate ``(lo, hi)`` pairs."""
        raise NotImplementedError

    def logpdf(self, pts):
        raise NotImplementedError

    def _draw(self, n, rng):
        raise NotImplementedError

    def pdf(self, pts):
        return np.exp(self.logpdf(pts))

    def in_support(self, pts):
        ok = np.ones(pts.shape[0], dtype=bool)
        for k, (lo, hi) in enumerate(self.support()):
            ok &= (pts[:, k] >= lo) & (pts[:, k] <= hi)
        return ok

    def tail_variance(self):
        """Largest Gaussian tail variance on unbounded coordinates (None if bounded)."""
        return None


@dataclass(frozen=True, eq=True)
class Gaussian(DistSpec):
    mean: tuple
    var: tuple
    family = "gaussian"

    def __post_init__(self):
        mean = tuple(float(m) for m in np.atleast_1d(self.mean))
        var = tuple(float(v) for v in np.atleast_1d(self.var))
        if len(var) == 1 and len(mean) > 1:
            var = var * len(mean)
        if len(mean) != len(var) or not mean:
            raise ArgumentError("mean and variance lists must have equal nonzero length")
        if not all(v > 0 and np.isfinite(v) for v in var) or not all(np.isfinite(mean)):
            raise ArgumentError("Gaussian variances must be positive and means finite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)

    @property
    def dim(self):
        return len(self.mean)

    def support(self):
        return [(-np.inf, np.inf)] * self.dim

    def logpdf(self, pts):
        m, v = np.array(self.mean), np.array(self.var)
        return np.sum(-0.5 * (pts - m) ** 2 / v - 0.5 * np.log(2 * np.pi * v), axis=1)

    def _draw(self, n, rng):
        return rng.normal(np.array(self.mean), np.sqrt(np.array(self.var)), size=(n, self.dim))

    def tail_variance(self):
        return max(self.var)

    def __str__(self):
        groups = "|".join(f"{_fmt(m)},{_fmt(v)}" for m, v in zip(self.mean, self.var))
        return f"gauss:{groups}"


@dataclass(frozen=True, eq=True)
class TruncatedGaussian(DistSpec):
    """Diagonal Gaussian restricted to the box ``[lo, hi]^dim``."""

    mean: tuple
    lo: float
    hi: float
    var: float = 1.0
    family = "truncated_gaussian"

    def __post_init__(self):
        mean = tuple(float(m) for m in np.atleast_1d(self.mean))
        object.__setattr__(self, "mean", mean)
        if not mean or not self.lo < self.hi or not self.var > 0:
            raise ArgumentError("truncated Gaussian needs a nonempty box and positive variance")

    @classmethod
    def centered(cls, a, k, lo=None, hi=None):
        """``N_t(a, I_k)``; the default box is ``[a - 3, a + 3]^k``."""
        k = int(k)
        if k < 1:
            raise ArgumentError("dimension must be >= 1")
        lo = a - TRUNCATION_HALF_WIDTH if lo is None else lo
        hi = a + TRUNCATION_HALF_WIDTH if hi is None else hi
        return cls(mean=(float(a),) * k, lo=float(lo), hi=float(hi))

    @property
    def dim(self):
        return len(self.mean)

    def coordinates(self):
        return [TruncatedGaussian((m,), self.lo, self.hi, self.var) for m in self.mean]

    def support(self):
        return [(self.lo, self.hi)] * self.dim

    def _log_mass(self):
        m, s = np.array(self.mean), np.sqrt(self.var)
        a, b = (self.lo - m) / s, (self.hi - m) / s
        # work in the lower tail so far-out boxes do not underflow
        flip = a > 0
        a, b = np.where(flip, -b, a), np.where(flip, -a, b)
        hi, lo = special.log_ndtr(b), special.log_ndtr(a)
        return hi + np.log1p(-np.exp(lo - hi))

    def logpdf(self, pts):
        m, v = np.array(self.mean), self.var
        inside = self.in_support(pts)
        with np.errstate(divide="ignore"):
            base = np.sum(-0.5 * (pts - m) ** 2 / v - 0.5 * np.log(2 * np.pi * v)
                          - self._log_mass(), axis=1)
        return np.where(inside, base, -np.inf)

    def _draw(self, n, rng):
        acc = float(np.exp(np.sum(self._log_mass())))
        if acc < MIN_ACCEPTANCE:
            raise SamplingError(f"rejection acceptance rate {acc:.3g} is below {MIN_ACCEPTANCE}")
        m, s = np.array(self.mean), np.sqrt(self.var)
        out, have = [], 0
        while have < n:
            batch = int(np.ceil((n - have) / acc * 1.1)) + 16
            z = rng.normal(m, s, size=(batch, self.dim))
            z = z[self.in_support(z)]
            out.append(z)
            have += z.shape[0]
        return np.vstack(out)[:n]

    def __str__(self):
        a = self.mean[0]
        if all(m == a for m in self.mean) and self.var == 1.0:
            return f"tgauss:{_fmt(a)},{self.dim},{_fmt(self.lo)},{_fmt(self.hi)}"
        return f"TruncatedGaussian(mean={self.mean}, lo={self.lo}, hi={self.hi}, var={self.var})"


@dataclass(frozen=True, eq=True)
class Beta(DistSpec):
    a: float
    b: float
    family = "beta"
    dim = 1

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ArgumentError("beta shape parameters must be positive")

    def support(self):
        return [(0.0, 1.0)]

    def logpdf(self, pts):
        t = pts[:, 0]
        inside = (t >= 0) & (t <= 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = stats.beta.logpdf(np.clip(t, 0, 1), self.a, self.b)
        return np.where(inside, val, -np.inf)

    def _draw(self, n, rng):
        return rng.beta(self.a, self.b, size=(n, 1))

    def __str__(self):
        return f"beta:{_fmt(self.a)},{_fmt(self.b)}"


@dataclass(frozen=True, eq=True)
class GaussianMixture(DistSpec):
    weights: tuple
    means: tuple
    variances: tuple
    family = "gaussian_mixture"
    dim = 1

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", tuple(float(v) for v in self.means))
        object.__setattr__(self, "variances", tuple(float(v) for v in self.variances))
        if not (len(w) == len(self.means) == len(self.variances) >= 1):
            raise ArgumentError("mixture needs equal numbers of weights, means and variances")
        if not all(v > 0 for v in w) or abs(sum(w) - 1) > 1e-9:
            raise ArgumentError("mixture weights must be positive and sum to 1")
        if not all(v > 0 for v in self.variances):
            raise ArgumentError("mixture variances must be positive")

    def support(self):
        return [(-np.inf, np.inf)]

    def logpdf(self, pts):
        t = pts[:, 0, None]
        m, v, w = np.array(self.means), np.array(self.variances), np.array(self.weights)
        comp = np.log(w) - 0.5 * (t - m) ** 2 / v - 0.5 * np.log(2 * np.pi * v)
        return special.logsumexp(comp, axis=1)

    def _draw(self, n, rng):
        idx = rng.choice(len(self.weights), size=n, p=np.array(self.weights))
        m, s = np.array(self.means)[idx], np.sqrt(np.array(self.variances))[idx]
        return (m + s * rng.standard_normal(n))[:, None]

    def tail_variance(self):
        return max(self.variances)

    def __str__(self):
        parts = [f"{_fmt(w)}*gauss:{_fmt(m)},{_fmt(v)}"
                 for w, m, v in zip(self.weights, self.means, self.variances)]
        return "mix:" + "+".join(parts)


@dataclass(frozen=True, eq=True)
class Product(DistSpec):
    components: tuple
    family = "product"

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps or not all(isinstance(c, DistSpec) for c in comps):
            raise ArgumentError("product needs at least one component distribution")
        object.__setattr__(self, "components", comps)

    @property
    def dim(self):
        return sum(c.dim for c in self.components)

    def _blocks(self, pts):
        k = 0
        for c in self.components:
            yield c, pts[:, k:k + c.dim]
            k += c.dim

    def support(self):
        return [s for c in self.components for s in c.support()]

    def logpdf(self, pts):
        return sum(c.logpdf(block) for c, block in self._blocks(pts))

    def _draw(self, n, rng):
        return np.hstack([c._draw(n, rng) for c in self.components])

    def tail_variance(self):
        tv = [c.tail_variance() for c in self.components if c.tail_variance() is not None]
        return max(tv) if tv else None

    def __str__(self):
        return "prod:" + "&".join(str(c) for c in self.components)


# --------------------------------------------------------------------------


def sample(spec: DistSpec, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` i.i.d. points as an ``(n, dim)`` array; deterministic in ``seed``."""
    n = int(n)
    if n < 1:
        raise ArgumentError("n must be >= 1")
    rng = np.random.default_rng(int(seed))
    return np.ascontiguousarray(spec._draw(n, rng), dtype=float)


def _check_dim(spec, t):
    arr = np.asarray(t, dtype=float)
    single = arr.ndim <= 1
    pts = arr.reshape(1, -1) if single else as_points(arr, "t")
    if pts.shape[1] != spec.dim:
        raise ArgumentError(f"point dimension {pts.shape[1]} does not match {spec.dim}")
    return pts, single


def density(spec: DistSpec, t):
    """Normalised density at a point (float) or at each row of an array."""
    pts, single = _check_dim(spec, t)
    val = np.where(spec.in_support(pts), spec.pdf(pts), 0.0)
    return float(val[0]) if single else val


class RatioOracle:
    """Exact likelihood ratio ``t -> density(p, t) / density(q, t)``."""

    def __init__(self, p: DistSpec, q: DistSpec):
        _check_pair(p, q)
        self.p, self.q = p, q

    def __call__(self, t):
        # kept as the literal density quotient so it matches it exactly
        return density(self.p, t) / density(self.q, t)

    def log(self, t):
        pts, single = _check_dim(self.p, t)
        val = self.p.logpdf(pts) - self.q.logpdf(pts)
        return float(val[0]) if single else val


def _check_pair(p, q):
    if p.dim != q.dim:
        raise ArgumentError(f"dimension mismatch: {p.dim} vs {q.dim}")
    if p.support() != q.support():
        raise ArgumentError(f"support mismatch between {p} and {q}")


def true_ratio(p: DistSpec, q: DistSpec) -> RatioOracle:
    return RatioOracle(p, q)


class Truth(NamedTuple):
    value: float
    approximate: bool


def _quad_1d(p, fn):
    lo, hi = p.support()[0]
    pts = None
    if not np.isfinite(lo):
        centers = np.atleast_1d(getattr(p, "means", getattr(p, "mean", (0.0,))))
        width = 14.0 * np.sqrt(p.tail_variance())
        lo, hi = centers.min() - width, centers.max() + width
        pts = list(centers)
    val, _err = integrate.quad(fn, lo, hi, points=pts, limit=400,
                               epsabs=QUAD_TOL, epsrel=QUAD_TOL)
    return val


def _decompose(p, q):
    """Pairs of independent 1-D (or block) factors, when both share a structure."""
    if isinstance(p, TruncatedGaussian) and isinstance(q, TruncatedGaussian) and p.dim > 1:
        return list(zip(p.coordinates(), q.coordinates()))
    if isinstance(p, Product) and isinstance(q, Product):
        if [c.dim for c in p.components] == [c.dim for c in q.components]:
            return list(zip(p.components, q.components))
    return None


def _mc_mean(p, fn):
    pts = sample(p, MC_ORACLE_SIZE, derive_seed(0x5EED, "oracle", str(p)))
    return float(np.mean(fn(pts)))


def kl_truth(p: DistSpec, q: DistSpec) -> Truth:
    _check_pair(p, q)
    if isinstance(p, Gaussian) and isinstance(q, Gaussian):
        mp, vp, mq, vq = map(np.array, (p.mean, p.var, q.mean, q.var))
        return Truth(float(0.5 * np.sum(vp / vq + (mq - mp) ** 2 / vq - 1 + np.log(vq / vp))), False)
    if isinstance(p, Beta) and isinstance(q, Beta):
        a1, b1, a2, b2 = p.a, p.b, q.a, q.b
        val = (special.betaln(a2, b2) - special.betaln(a1, b1)
               + (a1 - a2) * special.digamma(a1) + (b1 - b2) * special.digamma(b1)
               + (a2 - a1 + b2 - b1) * special.digamma(a1 + b1))
        return Truth(float(val), False)
    parts = _decompose(p, q)
    if parts:
        sub = [kl_truth(a, b) for a, b in parts]
        return Truth(sum(s.value for s in sub), any(s.approximate for s in sub))
    if p.dim == 1:
        def integrand(t):
            pt = np.array([[t]])
            lp = p.logpdf(pt)[0]
            return 0.0 if lp == -np.inf else float(np.exp(lp) * (lp - q.logpdf(pt)[0]))
        val = _quad_1d(p, integrand)
        if not np.isfinite(val):
            raise ArgumentError("KL integral diverges")
        return Truth(float(val), False)
    val = _mc_mean(p, lambda pts: p.logpdf(pts) - q.logpdf(pts))
    if not np.isfinite(val):
        raise ArgumentError("KL integral diverges")
    return Truth(val, True)


def _gauss_chi2(mp, vp, mq, vq):
    a = 2.0 / vp - 1.0 / vq
    if a <= 0:
        raise ArgumentError("chi-square integral diverges: P has heavier tails than Q allows")
    b = 2 * mp / vp - mq / vq
    c = 2 * mp**2 / vp - mq**2 / vq
    return np.sqrt(vq / a) / vp * np.exp(0.5 * (b * b / a - c))


def chi2_truth(p: DistSpec, q: DistSpec) -> Truth:
    """``integral p^2 / q`` (equals 1 when p = q)."""
    _check_pair(p, q)
    if isinstance(p, Gaussian) and isinstance(q, Gaussian):
        return Truth(float(np.prod([_gauss_chi2(*args) for args in zip(p.mean, p.var, q.mean, q.var)])), False)
    if isinstance(p, Beta) and isinstance(q, Beta):
        a, b = 2 * p.a - q.a, 2 * p.b - q.b
        if a <= 0 or b <= 0:
            raise ArgumentError("chi-square integral diverges at the boundary")
        val = special.betaln(a, b) + special.betaln(q.a, q.b) - 2 * special.betaln(p.a, p.b)
        return Truth(float(np.exp(val)), False)
    parts = _decompose(p, q)
    if parts:
        sub = [chi2_truth(a, b) for a, b in parts]
        return Truth(float(np.prod([s.value for s in sub])), any(s.approximate for s in sub))
    tp, tq = p.tail_variance(), q.tail_variance()
    if tp is not None and tq is not None and 2.0 / tp - 1.0 / tq <= 0:
        raise ArgumentError("chi-square integral diverges: P has heavier tails than Q allows")
    if p.dim == 1:
        def integrand(t):
            pt = np.array([[t]])
            lp = p.logpdf(pt)[0]
            return 0.0 if lp == -np.inf else float(np.exp(2 * lp - q.logpdf(pt)[0]))
        val = _quad_1d(p, integrand)
        if not np.isfinite(val):
            raise ArgumentError("chi-square integral diverges")
        return Truth(float(val), False)
    val = _mc_mean(p, lambda pts: np.exp(p.logpdf(pts) - q.logpdf(pts)))
    if not np.isfinite(val):
        raise ArgumentError("chi-square integral diverges")
    return Truth(val, True)


def analytic_kl(p: DistSpec, q: DistSpec) -> float:
    return kl_truth(p, q).value


def analytic_chi2(p: DistSpec, q: DistSpec) -> float:
    return chi2_truth(p, q).value


# --------------------------------------------------------------------------
# text form

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


def _floats(text, what):
    try:
        return [float(tok) for tok in text.split(",")]
    except ValueError:
        raise ParseError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def parse_dist(text: str) -> DistSpec:
    text = text.strip()
    head, sep, body = text.partition(":")
    if not sep:
        raise ParseError(f"distribution {text!r} lacks a 'family:' prefix")
    m = re.fullmatch(r"gauss(\d*)", head)
    if m:
        groups = [_floats(g, "gauss") for g in body.split("|")]
        if any(len(g) != 2 for g in groups):
            raise ParseError(f"gauss expects mean,variance per coordinate, got {body!r}")
        if m.group(1) and int(m.group(1)) != len(groups):
            raise ParseError(f"{head} declares {m.group(1)} coordinates but {len(groups)} given")
        return Gaussian(tuple(g[0] for g in groups), tuple(g[1] for g in groups))
    if head == "tgauss":
        vals = _floats(body, "tgauss")
        if len(vals) not in (2, 4) or vals[1] != int(vals[1]):
            raise ParseError("tgauss expects a,k or a,k,lo,hi")
        return TruncatedGaussian.centered(vals[0], int(vals[1]), *vals[2:])
    if head == "beta":
        vals = _floats(body, "beta")
        if len(vals) != 2:
            raise ParseError("beta expects a,b")
        return Beta(*vals)
    if head == "mix":
        w, mu, var = [], [], []
        for part in body.split("+"):
            mm = re.fullmatch(rf"\s*({_NUM})\s*\*\s*gauss:({_NUM}),({_NUM})\s*", part)
            if not mm:
                raise ParseError(f"mixture component {part!r} is not of the form w*gauss:m,v")
            w.append(float(mm.group(1)))
            mu.append(float(mm.group(2)))
            var.append(float(mm.group(3)))
        return GaussianMixture(tuple(w), tuple(mu), tuple(var))
    if head == "prod":
        return Product(tuple(parse_dist(part) for part in body.split("&")))
    raise ParseError(f"unknown distribution family {head!r}")
