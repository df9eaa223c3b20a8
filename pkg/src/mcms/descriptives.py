"""Composite scores, their correlations, and Cronbach's alpha."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .scale import FactorDef, ResponseMatrix, ScaleDefinition


def composite_scores(m: ResponseMatrix, scale: ScaleDefinition) -> np.ndarray:
    """Unweighted mean of each factor's items, one column per factor."""
    x = np.asarray(m.rows, dtype=float)
    cols = []
    for f in scale.factors:
        idx = [m.items.index(i) for i in f.items]
        cols.append(x[:, idx].mean(axis=1))
    return np.column_stack(cols)


@dataclass(frozen=True)
class CompositeStats:
    factors: tuple[str, ...]
    mean: np.ndarray
    sd: np.ndarray
    n: int

    def to_dict(self) -> dict:
        return {
            f: {"mean": float(mu), "sd": float(s)}
            for f, mu, s in zip(self.factors, self.mean, self.sd)
        }


def composite_stats(m: ResponseMatrix, scale: ScaleDefinition) -> CompositeStats:
    scores = composite_scores(m, scale)
    sd = scores.std(axis=0, ddof=1) if m.n > 1 else np.zeros(scores.shape[1])
    return CompositeStats(scale.factor_names, scores.mean(axis=0), sd, m.n)


@dataclass(frozen=True)
class CorrelationTable:
    """Pearson correlations with two-sided p-values (t test, n-2 df).

    ``undefined`` marks pairs involving a zero-variance composite; their
    correlation and p-value are ``nan``.
    """

    factors: tuple[str, ...]
    r: np.ndarray
    p_values: np.ndarray
    undefined: np.ndarray
    n: int


def composite_correlations(m: ResponseMatrix, scale: ScaleDefinition) -> CorrelationTable:
    if m.n < 3:
        raise ValueError("correlations need at least 3 respondents")
    scores = composite_scores(m, scale)
    sd = scores.std(axis=0, ddof=1)
    zero = sd == 0
    z = (scores - scores.mean(axis=0)) / np.where(zero, 1.0, sd)
    r = z.T @ z / (m.n - 1)
    r = np.clip((r + r.T) / 2, -1.0, 1.0)
    np.fill_diagonal(r, 1.0)
    undefined = zero[:, None] | zero[None, :]
    r[undefined] = np.nan
    df = m.n - 2
    with np.errstate(divide="ignore", invalid="ignore"):
        t = r * np.sqrt(df / (1.0 - r**2))
    pv = 2 * stats.t.sf(np.abs(t), df)
    np.fill_diagonal(pv, 0.0)
    pv[undefined] = np.nan
    return CorrelationTable(scale.factor_names, r, pv, undefined, m.n)


@dataclass(frozen=True)
class AlphaEstimate:
    alpha: float
    ci_low: float
    ci_high: float
    k: int
    n: int


def alpha_from_data(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    k = x.shape[1]
    total_var = x.sum(axis=1).var(ddof=1)
    if total_var == 0:
        raise ValueError("total score has zero variance")
    return k / (k - 1) * (1.0 - x.var(axis=0, ddof=1).sum() / total_var)


def feldt_interval(alpha: float, k: int, n: int, level: float = 0.95):
    """Feldt's F-based interval: ``1 - (1 - alpha) F_q`` with F(n-1, (n-1)(k-1))."""
    a = (1 - level) / 2
    d1, d2 = n - 1, (n - 1) * (k - 1)
    low = 1 - (1 - alpha) * stats.f.ppf(1 - a, d1, d2)
    high = 1 - (1 - alpha) * stats.f.ppf(a, d1, d2)
    return float(low), float(high)


def cronbach_alpha(m: ResponseMatrix, factor, level: float = 0.95) -> AlphaEstimate:
    """Cronbach's alpha of a factor's items with a Feldt confidence interval.

    ``factor`` is a :class:`FactorDef` or a sequence of item codes. Alpha is
    reported as computed; it can be negative.
    """
    items = factor.items if isinstance(factor, FactorDef) else tuple(factor)
    k = len(items)
    if k < 2:
        raise ValueError("alpha needs at least two items")
    if m.n < 3:
        raise ValueError("alpha needs at least three respondents")
    alpha = alpha_from_data(m.columns(items))
    low, high = feldt_interval(alpha, k, m.n, level)
    return AlphaEstimate(float(alpha), low, high, k, m.n)
