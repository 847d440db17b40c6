"""Piecewise-linear penalty kernels shared by all soft-constraint edges.

Each kernel returns a non-negative violation magnitude that is zero on the
feasible set and grows with unit slope outside it.  The optimizer treats the
kernel output as a residual r and each edge contributes weight * r**2 to the
total cost, so the zero set of a constraint is exactly its feasible set.
"""

from typing import NamedTuple

import numpy as np


class Interval(NamedTuple):
    """Closed interval [lo, hi] of the constrained quantity."""

    lo: float
    hi: float

    def validate(self):
        if not self.lo <= self.hi:
            raise ValueError(f"invalid interval: lo={self.lo} > hi={self.hi}")
        return self


def _smooth_relu(v, eps):
    """max(v, 0), optionally C1-smoothed with a quadratic blend on |v| < eps."""
    if eps <= 0.0:
        return np.maximum(v, 0.0)
    v = np.asarray(v, dtype=float)
    out = np.where(v >= eps, v, 0.0)
    blend = (v + eps) ** 2 / (4.0 * eps)
    return np.where(np.abs(v) < eps, blend, out)


def e_inter(x, iv: Interval, eps: float = 0.0):
    """Two-sided interval penalty: 0 inside [lo, hi], linear overshoot outside.

    Accepts scalars or arrays for x.  `eps` > 0 smooths the kinks (default 0
    keeps the exact piecewise-linear form).
    """
    lo, hi = iv
    below = _smooth_relu(np.asarray(lo) - x, eps)
    above = _smooth_relu(np.asarray(x) - hi, eps)
    return below + above


def e_more(x, lo, eps: float = 0.0):
    """One-sided lower-bound penalty: 0 when x >= lo, else lo - x."""
    return _smooth_relu(np.asarray(lo) - x, eps)


def e_less(x, hi, eps: float = 0.0):
    """One-sided upper-bound penalty: 0 when x <= hi, else x - hi."""
    return _smooth_relu(np.asarray(x) - hi, eps)


def weighted_cost(residuals):
    """Weighted-sum objective value: sum of weight * residual**2.

    `residuals` is an iterable of (residual, weight) pairs with weights >= 0.
    """
    total = 0.0
    for r, w in residuals:
        if w < 0:
            raise ValueError(f"negative weight {w}")
        total += w * float(np.sum(np.square(r)))
    return total
