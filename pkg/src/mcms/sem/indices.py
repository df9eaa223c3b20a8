"""Fit-index battery: chi-square, CFI, TLI, RMSEA with its 90% interval, SRMR."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import optimize, special, stats

from .._linalg import vech_indices


def noncentral_chisq_cdf(x, df, ncp, tol=1e-14):
    """CDF of the noncentral chi-square as a Poisson mixture of central CDFs.

    The Poisson(ncp/2) weights are summed over the window that holds all
    but ``tol`` of their mass, so large noncentralities stay accurate.
    """
    if df <= 0 or ncp < 0:
        raise ValueError("need df > 0 and ncp >= 0")
    if x <= 0:
        return 0.0
    if not np.isfinite(x):
        return 1.0
    lam = ncp / 2.0
    if lam == 0:
        return float(special.gammainc(df / 2.0, x / 2.0))
    lo = int(stats.poisson.ppf(tol / 2, lam))
    hi = int(stats.poisson.isf(tol / 2, lam)) + 1
    j = np.arange(max(lo, 0), hi + 1)
    weights = stats.poisson.pmf(j, lam)
    total = np.sum(weights * special.gammainc(df / 2.0 + j, x / 2.0))
    return float(min(max(total, 0.0), 1.0))


def rmsea(chisq, df, n, n_groups=1):
    """Point estimate ``sqrt(G * max(T - df, 0) / (df * n))``.

    ``n`` is the chi-square multiplier (``N - 1`` by default)."""
    if df == 0:
        return 0.0
    return math.sqrt(n_groups * max(chisq - df, 0.0) / (df * n))


def _ncp_for(chisq, df, target, xtol=1e-8):
    """Noncentrality at which ``P(X <= chisq) = target``; 0 if none exists."""
    f = lambda ncp: noncentral_chisq_cdf(chisq, df, ncp) - target
    if f(0.0) <= 0:
        return 0.0
    hi = max(chisq, 1.0)
    while f(hi) > 0:
        hi *= 2.0
    return optimize.brentq(f, 0.0, hi, xtol=xtol, rtol=1e-14)


def rmsea_ci(chisq, df, n, n_groups=1, level=0.90):
    if df == 0:
        return 0.0, 0.0
    a = (1 - level) / 2
    ncp_low = _ncp_for(chisq, df, 1 - a)
    ncp_high = _ncp_for(chisq, df, a)
    scale = lambda ncp: math.sqrt(n_groups * ncp / (df * n))
    return scale(ncp_low), scale(ncp_high)


def cfi(chisq, df, base_chisq, base_df):
    num = max(chisq - df, 0.0)
    den = max(base_chisq - base_df, chisq - df, 0.0)
    return 1.0 if den == 0 else 1.0 - num / den


def tli(chisq, df, base_chisq, base_df):
    if df == 0 or base_df == 0:
        return float("nan")
    b = base_chisq / base_df
    return (b - chisq / df) / (b - 1.0)


def srmr(S, sigma):
    """Root mean square of standardized residuals over the p(p+1)/2 lower cells."""
    r, c = vech_indices(S.shape[0])
    d = np.sqrt(np.diag(S))
    resid = (S[r, c] - sigma[r, c]) / (d[r] * d[c])
    return float(np.sqrt(np.mean(resid**2)))


@dataclass(frozen=True)
class FitIndices:
    chisq: float
    df: int
    pvalue: float
    chisq_sb: float | None
    sb_scale: float | None
    scaled: bool
    cfi: float
    tli: float
    rmsea: float
    rmsea_ci90: tuple[float, float]
    srmr: float
    baseline_chisq: float
    baseline_df: int
    n: float
    n_groups: int = 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rmsea_ci90"] = list(self.rmsea_ci90)
        return d


def compute_indices(
    chisq,
    df,
    n,
    baseline_chisq,
    baseline_df,
    srmr_value=float("nan"),
    n_groups=1,
    chisq_sb=None,
    sb_scale=None,
    scaled=False,
) -> FitIndices:
    """Indices from test statistics. With ``scaled`` the S-B statistic
    replaces ``chisq`` in CFI, TLI and RMSEA (and ``baseline_chisq`` must
    be the scaled baseline statistic)."""
    stat = chisq_sb if scaled and chisq_sb is not None else chisq
    pvalue = float(stats.chi2.sf(stat, df)) if df > 0 else 1.0
    if df == 0:
        rm, ci, c = 0.0, (0.0, 0.0), 1.0
    else:
        rm = rmsea(stat, df, n, n_groups)
        ci = rmsea_ci(stat, df, n, n_groups)
        c = cfi(stat, df, baseline_chisq, baseline_df)
    return FitIndices(
        chisq=float(chisq),
        df=int(df),
        pvalue=pvalue,
        chisq_sb=None if chisq_sb is None else float(chisq_sb),
        sb_scale=None if sb_scale is None else float(sb_scale),
        scaled=bool(scaled and chisq_sb is not None),
        cfi=float(c),
        tli=float(tli(stat, df, baseline_chisq, baseline_df)),
        rmsea=float(rm),
        rmsea_ci90=(float(ci[0]), float(ci[1])),
        srmr=float(srmr_value),
        baseline_chisq=float(baseline_chisq),
        baseline_df=int(baseline_df),
        n=float(n),
        n_groups=int(n_groups),
    )


def baseline_fit(moments, mean_structure=False, multiplier="n-1", robust=True):
    """Independence model: free variances (and means), zero covariances.

    Returns ``(chisq, df, chisq_sb)`` pooled over groups; groups are not
    constrained against each other.
    """
    from .estimation import Problem
    from .params import ParameterTable
    from .robust import scaling_factor
    from .spec import FactorModelSpec

    moments = list(moments)
    items = moments[0].items
    p = len(items)
    spec = FactorModelSpec(
        items=items,
        factors=(),
        loadings=np.zeros((p, 0)),
        factor_cov=np.zeros((0, 0)),
        residuals=np.full(p, np.nan),
        mean_structure=mean_structure,
        intercepts=np.full(p, np.nan),
        factor_means=np.zeros(0),
    )
    table = ParameterTable([spec] * len(moments), [m.group for m in moments])
    problem = Problem(table, moments, multiplier)
    theta = table.pack([(None, None, np.diag(m.cov), m.mean, None) for m in problem.moments])
    f = problem.value(theta)
    chisq = problem.n_eff * f
    df = table.df()
    chisq_sb = None
    if robust:
        chisq_sb = chisq / scaling_factor(problem, theta, df)
    return float(chisq), int(df), chisq_sb


def fit_indices(fit, moments, use_scaled=True) -> FitIndices:
    problem = fit.problem
    moments = problem.moments if problem is not None else list(
        moments if isinstance(moments, (list, tuple)) else [moments]
    )
    scaled = use_scaled and fit.chisq_sb is not None
    b_chisq, b_df, b_sb = baseline_fit(
        moments, fit.table.mean_structure, fit.multiplier, robust=scaled
    )
    total_n = sum(m.n for m in moments)
    srmr_value = 0.0
    for g, m in enumerate(moments):
        sigma, _ = fit.implied(g)
        srmr_value += m.n / total_n * srmr(m.cov, sigma)
    return compute_indices(
        fit.chisq,
        fit.df,
        fit.n_eff,
        b_sb if scaled else b_chisq,
        b_df,
        srmr_value,
        n_groups=len(moments),
        chisq_sb=fit.chisq_sb,
        sb_scale=fit.sb_scale,
        scaled=scaled,
    )
