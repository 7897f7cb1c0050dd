"""Empirical Gaussian anamorphosis (normal-score transform).

The transform is a monotone piecewise-linear map whose knots pair each
distinct sample value with the standard-normal quantile of its plotting
position ``(k - 0.5) / n``.  Beyond the outermost knots the first and last
segments are extended linearly, so the map is a bijection of the real line
and analysis increments that leave the sample range can still be mapped back.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .errors import ContractError, DegenerateDistributionError

# Acklam's rational approximation of the inverse normal CDF
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425
_SQRT2PI = math.sqrt(2.0 * math.pi)


def _lower_half_quantile(p):
    # p in (0, 0.5]; rational approximation then one Newton step on the CDF
    x = np.empty_like(p)
    tail = p < _P_LOW
    q = np.sqrt(-2.0 * np.log(p[tail]))
    x[tail] = ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
               / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    q = p[~tail] - 0.5
    r = q * q
    x[~tail] = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
                / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    # the lower-tail CDF is evaluated through erfc, which keeps full relative precision
    err = 0.5 * erfc(-x / math.sqrt(2.0)) - p
    return x - err * _SQRT2PI * np.exp(0.5 * x * x)


def std_normal_quantile(p):
    """Inverse CDF of the standard normal distribution.

    Absolute error is below 1e-9 for ``p`` in ``[1e-12, 1 - 1e-12]``.

    Parameters
    ----------
    p : float or array_like
        Probabilities strictly inside (0, 1).

    Raises
    ------
    ContractError
        If any ``p`` is outside the open interval (0, 1).
    """
    arr = np.asarray(p, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise ContractError("std_normal_quantile needs 0 < p < 1")
    flat = arr.reshape(-1)
    upper = flat > 0.5
    # 1 - p is exact for p in [0.5, 1], so the upper half reuses the lower branch
    half = np.where(upper, 1.0 - flat, flat)
    x = _lower_half_quantile(half)
    x = np.where(upper, -x, x)
    x[flat == 0.5] = 0.0
    x = x.reshape(arr.shape)
    return float(x) if x.ndim == 0 else x


@dataclass(frozen=True, eq=False)
class AnamorphosisFn:
    """Monotone piecewise-linear map between physical and Gaussian values."""

    knots_physical: np.ndarray
    knots_gaussian: np.ndarray
    lower_tail_slope: float
    upper_tail_slope: float

    def __post_init__(self):
        y = np.array(self.knots_physical, dtype=float)
        z = np.array(self.knots_gaussian, dtype=float)
        if y.ndim != 1 or y.shape != z.shape or len(y) < 2:
            raise ContractError("knot lists must be 1D, of equal length >= 2")
        if np.any(np.diff(y) <= 0) or np.any(np.diff(z) <= 0):
            raise ContractError("knots must be strictly increasing")
        if not (self.lower_tail_slope > 0 and self.upper_tail_slope > 0):
            raise ContractError("tail slopes must be positive")
        y.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "knots_physical", y)
        object.__setattr__(self, "knots_gaussian", z)

    @property
    def is_identity(self) -> bool:
        return (len(self.knots_physical) == 2
                and np.array_equal(self.knots_physical, self.knots_gaussian)
                and self.lower_tail_slope == 1.0 and self.upper_tail_slope == 1.0)

    def forward(self, y):
        """Map physical values to the Gaussian space."""
        return _piecewise(y, self.knots_physical, self.knots_gaussian,
                          self.lower_tail_slope, self.upper_tail_slope)

    def inverse(self, z):
        """Map Gaussian values back to the physical space."""
        return _piecewise(z, self.knots_gaussian, self.knots_physical,
                          1.0 / self.lower_tail_slope, 1.0 / self.upper_tail_slope)

    def to_csv(self, path):
        """Dump the knots as ``physical,gaussian`` rows."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["physical", "gaussian"])
            for y, z in zip(self.knots_physical, self.knots_gaussian):
                w.writerow([repr(float(y)), repr(float(z))])


def _piecewise(x, xk, fk, slope_lo, slope_hi):
    arr = np.asarray(x, dtype=float)
    out = np.interp(arr, xk, fk)
    out = np.where(arr < xk[0], fk[0] + slope_lo * (arr - xk[0]), out)
    out = np.where(arr > xk[-1], fk[-1] + slope_hi * (arr - xk[-1]), out)
    return float(out) if out.ndim == 0 else out


def identity_fn() -> AnamorphosisFn:
    """The anamorphosis applied to in-situ WSE observations."""
    return AnamorphosisFn(np.array([0.0, 1.0]), np.array([0.0, 1.0]), 1.0, 1.0)


def build(samples) -> AnamorphosisFn:
    """Normal-score transform fitted to ``samples``.

    Tied samples collapse to one knot carrying the mean of their quantiles.

    Raises
    ------
    DegenerateDistributionError
        If fewer than two distinct finite values are given.
    """
    y = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    if not np.all(np.isfinite(y)):
        raise ContractError("anamorphosis samples must be finite")
    n = len(y)
    z = std_normal_quantile((np.arange(1, n + 1) - 0.5) / n) if n else np.empty(0)
    knots, first = np.unique(y, return_index=True)
    if len(knots) < 2:
        raise DegenerateDistributionError(
            f"need at least 2 distinct samples, got {len(knots)}")
    counts = np.diff(np.append(first, n))
    gauss = np.add.reduceat(z, first) / counts
    lower = (gauss[1] - gauss[0]) / (knots[1] - knots[0])
    upper = (gauss[-1] - gauss[-2]) / (knots[-1] - knots[-2])
    return AnamorphosisFn(knots, gauss, lower, upper)


def forward(fn: AnamorphosisFn, y):
    return fn.forward(y)


def inverse(fn: AnamorphosisFn, z):
    return fn.inverse(z)
