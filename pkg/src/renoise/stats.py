"""Distribution-comparison toolkit for the Monte Carlo experiments.

Standard normal CDF, exact Kolmogorov-Smirnov distance to the Gaussian,
unbiased k-statistic cumulant estimators, and log-log rate fitting for
Berry-Esseen style comparisons.
"""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np
from scipy import special


def std_normal_cdf(z):
    """Standard normal CDF via the complementary error function.

    Accepts scalars or arrays; absolute error below 1e-12 everywhere.
    """
    z = np.asarray(z, float)
    out = 0.5 * special.erfc(-z / math.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


def ks_distance(samples) -> float:
    """sup_z |F_M(z) - Phi(z)| computed exactly.

    The empirical CDF is a step function, so the sup is attained at one
    of the sorted-sample discontinuities, approached from either side.
    """
    x = np.sort(np.asarray(samples, float))
    n = x.size
    if n < 2:
        raise ValueError("need at least 2 samples")
    cdf = std_normal_cdf(x)
    grid = np.arange(1, n + 1) / n
    return float(max(np.max(grid - cdf), np.max(cdf - (grid - 1.0 / n))))


def k_statistics(samples) -> tuple:
    """Unbiased k-statistics (k2, k3, k4) of a sample.

    k_p estimates the p-th cumulant; the finite-sample correction
    factors make each estimator exactly unbiased.
    """
    x = np.asarray(samples, float)
    n = x.size
    if n < 4:
        raise ValueError("need at least 4 samples")
    d = x - np.mean(x)
    m2 = np.mean(d ** 2)
    m3 = np.mean(d ** 3)
    m4 = np.mean(d ** 4)
    k2 = n / (n - 1.0) * m2
    k3 = n * n / ((n - 1.0) * (n - 2.0)) * m3
    k4 = (n * n * ((n + 1.0) * m4 - 3.0 * (n - 1.0) * m2 * m2)
          / ((n - 1.0) * (n - 2.0) * (n - 3.0)))
    return float(k2), float(k3), float(k4)


def _k_standard_errors(k2: float, n: int) -> tuple:
    # asymptotic normal-theory standard errors in terms of the
    # estimated variance; adequate at the large M used here
    return (math.sqrt(2.0 * k2 ** 2 / (n - 1.0)),
            math.sqrt(6.0 * k2 ** 3 / n),
            math.sqrt(24.0 * k2 ** 4 / n))


@dataclasses.dataclass(frozen=True)
class GofReport:
    """Goodness-of-fit summary of one sample set against the Gaussian."""

    ks: float
    n_samples: int
    k2: float
    k3: float
    k4: float
    se_k2: float
    se_k3: float
    se_k4: float
    be_rhs: float

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)


def gof_report(samples, be_rhs: float = float("nan")) -> GofReport:
    """KS distance plus cumulant estimates for one sample set."""
    k2, k3, k4 = k_statistics(samples)
    if k2 <= 0.0:
        raise ValueError("degenerate sample: k2 <= 0")
    se2, se3, se4 = _k_standard_errors(k2, len(samples))
    return GofReport(ks=ks_distance(samples), n_samples=len(samples),
                     k2=k2, k3=k3, k4=k4,
                     se_k2=se2, se_k3=se3, se_k4=se4, be_rhs=be_rhs)


def be_rate_fit(ks_series, rhs_series) -> dict:
    """Compare the decay rate of measured KS distances with a bound.

    Both series are sequences of (n, value) pairs.  Fits log2(value)
    against log2(n) by least squares and reports both slopes plus the
    verdict that the measured KS decays at least as fast as the bound,
    up to a 0.15 slope tolerance.
    """
    ks_series = np.asarray(ks_series, float)
    rhs_series = np.asarray(rhs_series, float)
    if len(ks_series) < 4 or len(rhs_series) < 4:
        raise ValueError("need at least 4 points per series")
    if np.any(ks_series <= 0) or np.any(rhs_series <= 0):
        raise ValueError("series entries must be positive")
    ks_slope = np.polyfit(np.log2(ks_series[:, 0]),
                          np.log2(ks_series[:, 1]), 1)[0]
    rhs_slope = np.polyfit(np.log2(rhs_series[:, 0]),
                           np.log2(rhs_series[:, 1]), 1)[0]
    return {"ks_slope": float(ks_slope), "rhs_slope": float(rhs_slope),
            "verdict": bool(ks_slope <= rhs_slope + 0.15)}
