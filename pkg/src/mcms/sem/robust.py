"""Satorra-Bentler scaled test statistic and sandwich standard errors."""

from __future__ import annotations

import numpy as np

from .estimation import Problem


def _problem(fit, moments):
    problem = fit.problem
    if problem is None:
        problem = Problem(fit.table, moments, fit.multiplier)
    return problem


def sandwich_parts(problem, theta, gammas=None):
    """Return (A, B, sum_g tr(W_g Gamma_g)) with A the pooled bread and B the meat."""
    table = problem.table
    mean = table.mean_structure
    if gammas is None:
        gammas = [m.gamma_full(mean) for m in problem.moments]
    k = table.size
    A = np.zeros((k, k))
    B = np.zeros((k, k))
    tr_wg = 0.0
    for g, gamma in enumerate(gammas):
        w = problem.weights[g]
        jac = problem.jacobian(theta, g)
        W = problem.weight(theta, g)
        WJ = W @ jac
        A += w * jac.T @ WJ
        B += w * WJ.T @ gamma @ WJ
        tr_wg += np.trace(W @ gamma)
    return (A + A.T) / 2, (B + B.T) / 2, tr_wg


def scaling_factor(problem, theta, df, gammas=None) -> float:
    A, B, tr_wg = sandwich_parts(problem, theta, gammas)
    try:
        correction = np.trace(np.linalg.solve(A, B)) if A.size else 0.0
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("Delta' W Delta is singular") from exc
    return float((tr_wg - correction) / df)


def satorra_bentler(fit, moments, gammas=None):
    """Scaling factor ``c = tr(U Gamma) / df`` and the scaled statistic ``T / c``.

    ``U = W - W Delta (Delta' W Delta)^-1 Delta' W`` with ``W`` the
    normal-theory weight matrix at the fitted moments. For several groups
    the traces are pooled with the group weights. ``gammas`` overrides the
    per-group fourth-moment matrices.
    """
    if fit.df == 0:
        return 1.0, fit.chisq
    c = scaling_factor(_problem(fit, moments), fit.theta, fit.df, gammas)
    return c, float(fit.chisq / c)


def robust_se(fit, moments, gammas=None) -> np.ndarray:
    """Sandwich standard errors ``sqrt(diag(A^-1 B A^-1) / n')``."""
    if fit.table.size == 0:
        return np.zeros(0)
    problem = _problem(fit, moments)
    A, B, _ = sandwich_parts(problem, fit.theta, gammas)
    try:
        Ainv = np.linalg.inv(A)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("bread matrix is singular") from exc
    acov = Ainv @ B @ Ainv / problem.n_eff
    return np.sqrt(np.clip(np.diag(acov), 0.0, None))
