"""Estimators and verdicts: normality distance, scaling fits, coupling gaps.

The empirical CLT metric is the Kolmogorov-Smirnov distance of standardized
values to Phi; it dominates any pointwise CDF comparison and has classical
critical values.  Scaling fits regress log(value) on log(log n), since the
theoretical exponents attach to log n and the grids span few decades; the
verdict is carried by a bootstrap confidence interval on the slope, never by
the point estimate alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVariance, NonPositiveValue
from .sampling import RngStream, std_normal_cdf


@dataclass(frozen=True)
class SampleSummary:
    count: int
    mean: float
    variance: float
    standardized: np.ndarray

    @classmethod
    def from_values(cls, values) -> "SampleSummary":
        vals = np.asarray(values, dtype=float)
        if vals.size < 2:
            raise DegenerateVariance("need at least two values")
        mean = float(vals.mean())
        var = float(vals.var(ddof=1))
        if var <= 0 or not np.isfinite(var):
            raise DegenerateVariance("sample variance is zero")
        return cls(count=vals.size, mean=mean, variance=var, standardized=(vals - mean) / np.sqrt(var))


def ks_distance(values) -> float:
    """sup_t |F_emp(t) - Phi(t)| over the standardized sample, at its jump points."""
    summary = SampleSummary.from_values(values)
    z = np.sort(summary.standardized)
    n = z.size
    cdf = std_normal_cdf(z)
    upper = np.abs(np.arange(1, n + 1) / n - cdf).max()
    lower = np.abs(np.arange(0, n) / n - cdf).max()
    return float(max(upper, lower))


def two_sample_ks(a, b) -> float:
    """sup_t |F_a(t) - F_b(t)| evaluated at the pooled jump points."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.abs(fa - fb).max())


@dataclass(frozen=True)
class ScalingFit:
    """Least squares of ln(value) against ln(ln n) with a bootstrap slope CI."""

    grid: tuple[tuple[float, float], ...]
    slope: float
    intercept: float
    residual_norm: float
    ci_low: float
    ci_high: float

    def covers(self, exponent: float) -> bool:
        return self.ci_low <= exponent <= self.ci_high


def _loglog_xy(grid) -> tuple[np.ndarray, np.ndarray]:
    ns = np.asarray([g[0] for g in grid], dtype=float)
    vals = np.asarray([g[1] for g in grid], dtype=float)
    if (vals <= 0).any():
        raise NonPositiveValue("scaling fit requires positive values")
    if np.unique(ns).size != ns.size or ns.size < 4:
        raise NonPositiveValue("need >= 4 distinct n values")
    return np.log(np.log(ns)), np.log(vals)


def log_log_slope(grid) -> tuple[float, float, float]:
    """(slope, intercept, residual_norm) of the ln-value vs ln-ln-n regression."""
    x, y = _loglog_xy(grid)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return float(slope), float(intercept), float(np.linalg.norm(resid))


def fit_scaling(grid, rng: RngStream | None = None, n_boot: int = 1000) -> ScalingFit:
    """Fit the scaling exponent with a residual-bootstrap 95% CI.

    Residual bootstrap keeps the regressor design fixed (the n grid is fixed
    by the experiment) and gives usable coverage at grid sizes as small as 4.
    """
    slope, intercept, resid_norm = log_log_slope(grid)
    x, y = _loglog_xy(grid)
    resid = y - (slope * x + intercept)
    gen = (rng or RngStream(0)).generator()
    boot = np.empty(n_boot)
    for i in range(n_boot):
        y_star = slope * x + intercept + gen.choice(resid, size=resid.size, replace=True)
        boot[i] = np.polyfit(x, y_star, 1)[0]
    lo, hi = np.quantile(boot, [0.025, 0.975])
    return ScalingFit(
        grid=tuple((float(n), float(v)) for n, v in grid),
        slope=slope,
        intercept=intercept,
        residual_norm=resid_norm,
        ci_low=float(lo),
        ci_high=float(hi),
    )


def rinott_bound(D: float, M: float, m: float, var_xi: float) -> float:
    """Quantitative CLT error for sums of locally dependent bounded variables.

    D: maximal dependency-graph degree, M: almost-sure bound on each summand,
    m: number of summands, var_xi: variance of the sum.  Evaluates the bound
    DM/sqrt(V) * (1/sqrt(2 pi) + 16 sqrt(mD) M / sqrt(V) + 10 m D M^2 / V).
    """
    if min(D, M, m, var_xi) <= 0:
        raise ValueError("all Rinott inputs must be positive")
    sd = np.sqrt(var_xi)
    return float(
        (D * M / sd)
        * (1.0 / np.sqrt(2.0 * np.pi) + 16.0 * np.sqrt(m * D) * M / sd + 10.0 * m * D * M * M / var_xi)
    )


@dataclass(frozen=True)
class CouplingEstimate:
    """Empirical versions of the three distribution-transfer conditions.

    eps1 = |mu' - mu| / sigma', eps2 = |sigma' - sigma| / sigma',
    eps3 = sup_t |P(Y' >= t) - P(Y >= t)|, with b playing the primed role.
    """

    eps1: float
    eps2: float
    eps3: float
    se1: float
    se2: float
    se3: float


def coupling_estimate(a, b, rng: RngStream | None = None, n_boot: int = 200) -> CouplingEstimate:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise DegenerateVariance("both samples must be nonempty")

    def eps(a_s, b_s):
        sb = b_s.std(ddof=1)
        if sb <= 0 or not np.isfinite(sb):
            raise DegenerateVariance("primed sample has zero variance")
        e1 = abs(b_s.mean() - a_s.mean()) / sb
        e2 = abs(sb - a_s.std(ddof=1)) / sb
        e3 = two_sample_ks(a_s, b_s)
        return e1, e2, e3

    e1, e2, e3 = eps(a, b)
    gen = (rng or RngStream(0)).generator()
    boots = np.empty((n_boot, 3))
    for i in range(n_boot):
        a_s = a[gen.integers(0, a.size, a.size)]
        b_s = b[gen.integers(0, b.size, b.size)]
        boots[i] = eps(a_s, b_s)
    se1, se2, se3 = boots.std(axis=0, ddof=1)
    return CouplingEstimate(e1, e2, e3, float(se1), float(se2), float(se3))


def event_frequency(flags) -> tuple[float, float]:
    """(mean, binomial standard error) of a boolean sample."""
    arr = np.asarray(flags, dtype=bool)
    if arr.size == 0:
        raise DegenerateVariance("empty flag list")
    p = float(arr.mean())
    return p, float(np.sqrt(p * (1.0 - p) / arr.size))
