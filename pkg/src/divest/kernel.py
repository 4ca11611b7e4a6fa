"""
Gaussian kernel evaluation and Gram matrices.

The kernel is ``K(x, y) = exp(-||x - y||^2 / sigma)``; note that ``sigma``
is measured in squared-distance units (it is not a standard deviation).

Point sets are plain ``(n, d)`` float arrays. :func:`as_points` accepts
1-D input (treated as ``n`` scalar points) and validates shape and
finiteness.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import ArgumentError, BandwidthError

#: bandwidth used for one-dimensional data when none is given
DEFAULT_SIGMA_1D = 0.1


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel with bandwidth ``sigma`` (squared-distance units)."""

    sigma: float

    def __post_init__(self):
        s = float(self.sigma)
        if not np.isfinite(s) or s <= 0:
            raise ArgumentError(f"kernel bandwidth must be positive and finite, got {self.sigma!r}")
        object.__setattr__(self, "sigma", s)


def as_points(a, name: str = "points") -> np.ndarray:
    """Return ``a`` as a validated ``(n, d)`` float array."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr[:, None]
    elif arr.ndim != 2:
        raise ArgumentError(f"{name}: expected a 1-D or 2-D array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ArgumentError(f"{name}: need at least one point of dimension >= 1")
    if not np.all(np.isfinite(arr)):
        raise ArgumentError(f"{name}: all coordinates must be finite")
    return arr


def as_point(t, dim: int | None = None, name: str = "point") -> np.ndarray:
    """Return a single point as a 1-D float array, checking its dimension."""
    arr = np.atleast_1d(np.asarray(t, dtype=float))
    if arr.ndim != 1:
        raise ArgumentError(f"{name}: expected a single point, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ArgumentError(f"{name}: dimension {arr.shape[0]} does not match {dim}")
    if not np.all(np.isfinite(arr)):
        raise ArgumentError(f"{name}: coordinates must be finite")
    return arr


def _sq_dist(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    # one pass over coordinates in fixed order; kernel_eval uses the same
    # accumulation so gram entries match it bit for bit
    out = np.zeros((A.shape[0], B.shape[0]))
    for k in range(A.shape[1]):
        diff = A[:, k, None] - B[None, :, k]
        out += diff * diff
    return out


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = as_point(x, name="x")
    y = as_point(y, dim=x.shape[0], name="y")
    return float(np.exp(-_sq_dist(x[None, :], y[None, :])[0, 0] / spec.sigma))


def gram(spec: KernelSpec, A, B=None) -> np.ndarray:
    """Dense Gram matrix ``G[i, j] = K(A_i, B_j)``.

    With ``B`` omitted (or ``B is A``) the result is exactly symmetric with
    a unit diagonal.
    """
    A = as_points(A, "A")
    if B is None or B is A:
        D = _sq_dist(A, A)
        # mirror the upper triangle so symmetry never depends on rounding
        iu = np.triu_indices(A.shape[0], 1)
        D.T[iu] = D[iu]
        np.fill_diagonal(D, 0.0)
        return np.exp(-D / spec.sigma)
    B = as_points(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ArgumentError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return np.exp(-_sq_dist(A, B) / spec.sigma)


@dataclass(frozen=True)
class GramBlocks:
    """Gram blocks for a Q-sample ``x`` and a P-sample ``y``."""

    Kxx: np.ndarray
    Kyy: np.ndarray
    Kxy: np.ndarray


def gram_blocks(spec: KernelSpec, x, y) -> GramBlocks:
    x = as_points(x, "x")
    y = as_points(y, "y")
    if x.shape[1] != y.shape[1]:
        raise ArgumentError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    return GramBlocks(Kxx=gram(spec, x), Kyy=gram(spec, y), Kxy=gram(spec, x, y))


def median_heuristic(A) -> float:
    """Median squared Euclidean distance over distinct index pairs."""
    A = as_points(A, "A")
    if A.shape[0] < 2:
        raise BandwidthError("median heuristic needs at least two points")
    med = float(np.median(pdist(A, "sqeuclidean")))
    if med <= 0:
        raise BandwidthError("median pairwise squared distance is zero")
    return med


def default_bandwidth(x, y) -> float:
    """0.1 for one-dimensional data, otherwise the median heuristic on x ∪ y."""
    x = as_points(x, "x")
    y = as_points(y, "y")
    if x.shape[1] != y.shape[1]:
        raise ArgumentError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    if x.shape[1] == 1:
        return DEFAULT_SIGMA_1D
    return median_heuristic(np.vstack([x, y]))
