"""
Data-dependent partition KL estimator (WKV-style baseline).

The line is cut into cells holding ``s = ceil(n**gamma)`` points of the
Q-sample each (the last cell absorbs the remainder); cell boundaries sit at
midpoints between adjacent Q order statistics.  The estimate is the plug-in
``sum_k p_k log(p_k / q_k)`` of the empirical cell masses after additive
smoothing by ``1 / (2 n)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .kernel import as_points


@dataclass(frozen=True)
class PartitionEstimate:
    cell_boundaries: np.ndarray
    cell_p_mass: np.ndarray
    cell_q_mass: np.ndarray
    value: float
    gamma: float
    points_per_cell: int

    @property
    def n_cells(self):
        return self.cell_p_mass.shape[0]


def _smooth(counts, total, eps):
    m = counts / total + eps
    return m / m.sum()


def fit_partition(x_from_Q, y_from_P, gamma: float = 0.5) -> PartitionEstimate:
    x = as_points(x_from_Q, "x_from_Q")
    y = as_points(y_from_P, "y_from_P")
    if x.shape[1] != 1 or y.shape[1] != 1:
        raise ArgumentError("the partition baseline supports one-dimensional data only")
    gamma = float(gamma)
    if not 0 < gamma < 1:
        raise ArgumentError(f"gamma must lie in (0, 1), got {gamma!r}")
    n_q, n_p = x.shape[0], y.shape[0]
    if min(n_q, n_p) < 4:
        raise ArgumentError("need at least 4 points in each sample")

    s = math.ceil(n_q ** gamma)
    if s >= n_q:
        warnings.warn(f"degenerate partition: {s} points per cell with n={n_q}; returning 0",
                      RuntimeWarning, stacklevel=2)
        one = np.ones(1)
        return PartitionEstimate(np.empty(0), one, one.copy(), 0.0, gamma, s)

    xs = np.sort(x[:, 0])
    n_cells = n_q // s
    cut = np.arange(1, n_cells) * s
    bounds = 0.5 * (xs[cut - 1] + xs[cut])

    q_counts = np.diff(np.concatenate([[0], cut, [n_q]])).astype(float)
    # a P point equal to a boundary goes to the lower cell
    cells = np.searchsorted(bounds, y[:, 0], side="left")
    p_counts = np.bincount(cells, minlength=n_cells).astype(float)

    eps = 1.0 / (2 * max(n_q, n_p))
    p = _smooth(p_counts, n_p, eps)
    q = _smooth(q_counts, n_q, eps)
    value = float(np.sum(p * np.log(p / q)))
    return PartitionEstimate(bounds, p, q, value, gamma, s)
