"""Normality diagnostics for sampled margin distributions: an inverse normal
CDF, QQ-plot data against a fitted normal, and a Freedman-Diaconis histogram
with the fitted density overlaid.

The inverse CDF uses Acklam's rational approximation refined by a single
Newton step against the erf-based CDF, which brings the absolute error well
below 1e-9 across (0, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    pass


class DegenerateVariance(ValueError):
    pass


# Acklam's coefficients for the central and tail rational approximations.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def _acklam(p: float) -> float:
    # p is in (0, 0.5]; the caller handles the upper half by reflection.
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        return num / den
    q = p - 0.5
    r = q * q
    num = ((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    return num * q / den


def inverse_normal_cdf(p: float) -> float:
    """Quantile of the standard normal. Raises DomainError outside (0, 1).

    The upper half reflects through the lower half, so the output is exactly
    antisymmetric about p = 0.5 whenever 1 - p is exactly representable.
    """
    p = float(p)
    if not 0.0 < p < 1.0 or math.isnan(p):
        raise DomainError(f"p must lie strictly inside (0, 1), got {p}")
    if p > 0.5:
        return -inverse_normal_cdf(1.0 - p)
    x = _acklam(p)
    err = normal_cdf(x) - p
    pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return x - err / pdf


@dataclass
class QQData:
    theoretical: np.ndarray
    observed: np.ndarray
    slope: float
    intercept: float
    r_squared: float


def _fit_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(resid @ resid)
    centered = y - y.mean()
    ss_tot = float(centered @ centered)
    r_sq = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r_sq


def qq_against_normal(samples) -> QQData:
    """Order statistics vs. quantiles of the moment-fitted normal, using
    plotting positions (r - 0.5) / K, plus the least-squares line through the
    points. A perfectly normal sample gives slope 1, intercept 0, R^2 = 1."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 3:
        raise ValueError("need at least 3 samples")
    # Identical samples must be caught by the range: the mean of K equal
    # floats carries ulp-level rounding, so the std can come out nonzero.
    if np.ptp(x) == 0.0:
        raise DegenerateVariance("all samples identical; QQ plot undefined")
    mu = float(x.mean())
    sigma = float(x.std(ddof=1))
    if sigma == 0.0:
        raise DegenerateVariance("sample variance underflowed; QQ plot undefined")
    observed = np.sort(x)
    k = x.size
    positions = (np.arange(1, k + 1) - 0.5) / k
    theoretical = np.array([mu + sigma * inverse_normal_cdf(p) for p in positions])
    slope, intercept, r_sq = _fit_line(theoretical, observed)
    return QQData(theoretical, observed, slope, intercept, r_sq)


@dataclass
class HistogramData:
    edges: np.ndarray
    counts: np.ndarray
    densities: np.ndarray       # counts normalized to integrate to 1
    centers: np.ndarray
    normal_densities: np.ndarray  # fitted normal pdf at bin centers
    bin_width: float


def margin_histogram(samples) -> HistogramData:
    """Freedman-Diaconis binning (width 2*IQR/K^(1/3)); falls back to
    sqrt-rule bin counts when the IQR collapses."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 3:
        raise ValueError("need at least 3 samples")
    if np.ptp(x) == 0.0:
        raise DegenerateVariance("all samples identical; histogram degenerate")
    mu = float(x.mean())
    sigma = float(x.std(ddof=1))
    if sigma == 0.0:
        raise DegenerateVariance("sample variance underflowed; histogram degenerate")
    lo, hi = float(x.min()), float(x.max())
    q25, q75 = np.percentile(x, [25.0, 75.0])
    width = 2.0 * (q75 - q25) / x.size ** (1.0 / 3.0)
    if width > 0.0:
        n_bins = max(1, int(math.ceil((hi - lo) / width)))
    else:
        n_bins = max(1, int(math.ceil(math.sqrt(x.size))))
    counts, edges = np.histogram(x, bins=n_bins, range=(lo, hi))
    bin_width = float(edges[1] - edges[0]) if n_bins > 1 else float(hi - lo) or 1.0
    densities = counts / (x.size * bin_width)
    centers = 0.5 * (edges[:-1] + edges[1:])
    z = (centers - mu) / sigma
    normal_densities = np.exp(-0.5 * z * z) / (sigma * math.sqrt(2.0 * math.pi))
    return HistogramData(edges, counts, densities, centers, normal_densities, bin_width)
