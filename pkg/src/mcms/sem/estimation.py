"""Normal-theory maximum likelihood estimation of CFA models.

The discrepancy minimized is ``F = sum_g w_g F_g`` with

    F_g = ln|Sigma_g| - ln|S_g| + tr(S_g Sigma_g^-1) - p + d_g' Sigma_g^-1 d_g,
    d_g = mean_g - mu_g,

weights ``w_g = n'_g / n'`` and test statistic ``T = n' F``. ``n'_g`` is ``n_g - 1``
(default) or ``n_g`` depending on the chi-square multiplier convention.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .._linalg import normal_weight, vech_indices
from ..ingest import SampleMoments
from .params import ParameterTable
from .spec import FactorModelSpec

log = logging.getLogger(__name__)

BARRIER = 1e20
VARIANCE_FLOOR = 1e-6
MULTIPLIERS = ("n-1", "n")


class ConvergenceError(RuntimeError):
    pass


def implied_moments(spec_or_table, theta, group: int = 0):
    """Model-implied covariance matrix and mean vector.

    ``Sigma = Lambda Phi Lambda' + diag(theta)``, ``mu = tau + Lambda kappa``.
    ``mu`` is ``None`` for models without a mean structure.
    """
    table = spec_or_table
    if isinstance(spec_or_table, FactorModelSpec):
        table = ParameterTable([spec_or_table])
    lam, phi, th, tau, kap = table.matrices(theta, group)
    sigma = lam @ phi @ lam.T + np.diag(th)
    sigma = (sigma + sigma.T) / 2
    mu = tau + lam @ kap if table.mean_structure else None
    return sigma, mu


def fml(S, mbar, sigma, mu=None):
    """ML discrepancy between sample and model moments.

    Returns ``BARRIER`` when ``sigma`` is not positive definite.
    """
    p = S.shape[0]
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        return BARRIER
    logdet_sigma = 2.0 * np.log(np.diag(chol)).sum()
    sign, logdet_s = np.linalg.slogdet(S)
    if sign <= 0:
        raise ValueError("sample covariance matrix is not positive definite")
    inv = np.linalg.inv(sigma)
    f = logdet_sigma - logdet_s + np.trace(S @ inv) - p
    if mu is not None and mbar is not None:
        d = mbar - mu
        f += d @ inv @ d
    return float(f)


def multiplier_counts(moments: Sequence[SampleMoments], multiplier: str = "n-1"):
    if multiplier not in MULTIPLIERS:
        raise ValueError(f"chi-square multiplier must be one of {MULTIPLIERS}")
    off = 1 if multiplier == "n-1" else 0
    return np.array([m.n - off for m in moments], dtype=float)


class Problem:
    """Pooled ML objective over the groups of a parameter table."""

    def __init__(self, table: ParameterTable, moments: Sequence[SampleMoments], multiplier="n-1"):
        moments = list(moments)
        if len(moments) != table.n_groups:
            raise ValueError("need one moments object per group")
        items = table.specs[0].items
        self.moments = [m if m.items == items else m.reorder(items) for m in moments]
        self.table = table
        self.multiplier = multiplier
        counts = multiplier_counts(self.moments, multiplier)
        self.n_eff = counts.sum()
        self.weights = counts / self.n_eff
        self._logdet_s = []
        for m in self.moments:
            sign, ld = np.linalg.slogdet(m.cov)
            if sign <= 0:
                raise ValueError(f"group {m.group}: sample covariance matrix is singular")
            self._logdet_s.append(ld)

    def sample_cov(self, g):
        # ML fitting consumes the N-1 divisor covariance matrix
        return self.moments[g].cov

    def value(self, theta):
        total = 0.0
        for g, m in enumerate(self.moments):
            sigma, mu = implied_moments(self.table, theta, g)
            f = fml(self.sample_cov(g), m.mean, sigma, mu)
            if f >= BARRIER:
                return BARRIER
            total += self.weights[g] * f
        return total

    def value_and_grad(self, theta):
        grad = np.zeros(self.table.size)
        total = 0.0
        mean = self.table.mean_structure
        for g, m in enumerate(self.moments):
            lam, phi, th, tau, kap = self.table.matrices(theta, g)
            sigma = lam @ phi @ lam.T + np.diag(th)
            sigma = (sigma + sigma.T) / 2
            try:
                chol = np.linalg.cholesky(sigma)
            except np.linalg.LinAlgError:
                return BARRIER, grad
            S = self.sample_cov(g)
            p = S.shape[0]
            inv = np.linalg.inv(sigma)
            f = 2.0 * np.log(np.diag(chol)).sum() - self._logdet_s[g] + np.trace(S @ inv) - p
            # dF/dSigma = Sigma^-1 (Sigma - S) Sigma^-1 - Sigma^-1 d d' Sigma^-1
            G = inv - inv @ S @ inv
            d_tau = d_kap = None
            if mean:
                d = m.mean - (tau + lam @ kap)
                v = inv @ d
                f += d @ v
                G -= np.outer(v, v)
                d_mu = -2.0 * v
                d_tau = d_mu
                d_kap = lam.T @ d_mu
            G = (G + G.T) / 2
            d_lam = 2.0 * G @ lam @ phi
            if mean:
                d_lam += np.outer(d_mu, kap)
            d_phi = lam.T @ G @ lam
            d_th = np.diag(G).copy()
            w = self.weights[g]
            total += w * f
            self.table.accumulate(
                g,
                grad,
                w * d_lam,
                w * d_phi,
                w * d_th,
                None if d_tau is None else w * d_tau,
                None if d_kap is None else w * d_kap,
            )
        return total, grad

    def jacobian(self, theta, g):
        """Derivative of group ``g``'s moment vector (mean, vech Sigma) wrt theta."""
        table = self.table
        lam, phi, th, tau, kap = table.matrices(theta, g)
        spec = table.specs[g]
        p = spec.p
        vr, vc = vech_indices(p)
        mean = table.mean_structure
        off = p if mean else 0
        jac = np.zeros((off + len(vr), table.size))
        lam_idx, phi_idx, th_idx, tau_idx, kap_idx = table.index_arrays(g)
        B = lam @ phi
        for i, j in zip(*np.nonzero(lam_idx >= 0)):
            k = lam_idx[i, j]
            jac[off:, k] += (vr == i) * B[vc, j] + (vc == i) * B[vr, j]
            if mean:
                jac[i, k] += kap[j]
        for a, b in zip(*np.nonzero(phi_idx >= 0)):
            k = phi_idx[a, b]
            jac[off:, k] += lam[vr, a] * lam[vc, b]
        for i in np.nonzero(th_idx >= 0)[0]:
            jac[off:, th_idx[i]] += (vr == i) & (vc == i)
        if mean:
            for i in np.nonzero(tau_idx >= 0)[0]:
                jac[i, tau_idx[i]] += 1.0
            for a in np.nonzero(kap_idx >= 0)[0]:
                jac[:p, kap_idx[a]] += lam[:, a]
        return jac

    def weight(self, theta, g):
        """Normal-theory weight matrix for group ``g`` on (mean, vech) moments."""
        sigma, _ = implied_moments(self.table, theta, g)
        inv = np.linalg.inv(sigma)
        w = normal_weight(inv)
        if not self.table.mean_structure:
            return w
        p = sigma.shape[0]
        out = np.zeros((p + w.shape[0],) * 2)
        out[:p, :p] = inv
        out[p:, p:] = w
        return out

    def information(self, theta):
        """Pooled ``sum_g w_g Delta_g' W_g Delta_g`` (half the expected Hessian of F)."""
        info = np.zeros((self.table.size, self.table.size))
        for g in range(self.table.n_groups):
            jac = self.jacobian(theta, g)
            info += self.weights[g] * jac.T @ self.weight(theta, g) @ jac
        return (info + info.T) / 2


def start_values(table: ParameterTable, moments: Sequence[SampleMoments]) -> np.ndarray:
    """Loadings 0.7, factor variances 1, covariances 0, residuals half the
    observed item variance, intercepts the observed means, factor means 0."""
    theta = np.zeros(table.size)
    for k, slots in enumerate(table.slots):
        s = slots[0]
        m = moments[s.group]
        if s.matrix == "lambda":
            theta[k] = 0.7
        elif s.matrix == "phi":
            theta[k] = 1.0 if s.row == s.col else 0.0
        elif s.matrix == "theta":
            theta[k] = 0.5 * m.cov[s.row, s.row]
        elif s.matrix == "tau":
            theta[k] = m.mean[s.row]
        else:
            theta[k] = 0.0
    return theta


@dataclass
class OptimizeResult:
    theta: np.ndarray
    fun: float
    grad: np.ndarray
    converged: bool
    n_iter: int
    grad_norm: float
    message: str = ""


def _projected_grad(x, g, lower):
    pg = g.copy()
    at = (x <= lower) & (g > 0)
    pg[at] = 0.0
    return pg


def quasi_newton(problem: Problem, x0, max_iter=10_000, gtol=1e-6, ftol=1e-10) -> OptimizeResult:
    """BFGS with backtracking line search and projection onto variance bounds.

    The inverse-Hessian approximation starts from the inverse expected
    information, which makes the early steps Fisher-scoring steps.
    """
    table = problem.table
    lower = np.where(table.variance_mask, VARIANCE_FLOOR, -np.inf)
    x = np.maximum(np.asarray(x0, dtype=float), lower)
    f, g = problem.value_and_grad(x)
    if f >= BARRIER:
        raise ConvergenceError("start values imply a non-positive-definite covariance matrix")

    def scoring_inverse(x):
        info = 2.0 * problem.information(x)
        try:
            return np.linalg.inv(info + 1e-10 * np.eye(len(x)) * max(1.0, np.abs(info).max()))
        except np.linalg.LinAlgError:
            return np.eye(len(x))

    H = scoring_inverse(x)
    n_iter = 0
    rel_change = np.inf
    message = "maximum iterations reached"
    pg = _projected_grad(x, g, lower)
    for n_iter in range(1, max_iter + 1):
        gnorm = np.linalg.norm(pg)
        if gnorm < gtol * max(1.0, abs(f)) and (rel_change < ftol or gnorm < 1e-3 * gtol):
            message = "converged"
            n_iter -= 1
            break
        active = (x <= lower) & (g > 0)
        free = ~active
        d = np.zeros_like(x)
        d[free] = -H[np.ix_(free, free)] @ g[free]
        slope = g @ d
        if not slope < 0:
            H = scoring_inverse(x)
            d = np.zeros_like(x)
            d[free] = -H[np.ix_(free, free)] @ g[free]
            slope = g @ d
            if not slope < 0:
                d = -pg
                slope = g @ d
        step = 1.0
        accepted = False
        for _ in range(60):
            x_new = np.maximum(x + step * d, lower)
            f_new, g_new = problem.value_and_grad(x_new)
            if f_new < BARRIER and f_new <= f + 1e-4 * (g @ (x_new - x)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # no decrease possible along d; retry once from a fresh scoring matrix
            H_fresh = scoring_inverse(x)
            if np.allclose(H_fresh, H):
                message = "line search failed"
                break
            H = H_fresh
            continue
        s = x_new - x
        y = g_new - g
        rel_change = abs(f - f_new) / max(1.0, abs(f_new))
        x, f, g = x_new, f_new, g_new
        pg = _projected_grad(x, g, lower)
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            Hy = H @ y
            H = H + ((sy + y @ Hy) * rho**2) * np.outer(s, s) - rho * (
                np.outer(Hy, s) + np.outer(s, Hy)
            )
    gnorm = float(np.linalg.norm(_projected_grad(x, g, lower)))
    converged = message == "converged"
    return OptimizeResult(x, float(f), g, converged, n_iter, gnorm, message)


@dataclass
class FitResult:
    """Estimates, standard errors and fit statistics of one (multi)group fit."""

    table: ParameterTable
    theta: np.ndarray
    fmin: float
    chisq: float
    df: int
    n_obs: tuple[int, ...]
    n_eff: float
    multiplier: str
    converged: bool
    n_iter: int
    grad_norm: float
    identified: bool
    se: np.ndarray
    se_robust: np.ndarray | None = None
    sb_scale: float | None = None
    chisq_sb: float | None = None
    indices: object = None
    notes: list = field(default_factory=list)
    problem: Problem | None = field(default=None, repr=False)
    multigroup: object = field(default=None, repr=False)
    options: dict = field(default_factory=dict)

    @property
    def moments(self):
        return self.problem.moments if self.problem is not None else None

    @property
    def groups(self):
        return self.table.groups

    @property
    def spec(self) -> FactorModelSpec:
        return self.table.specs[0]

    def labels(self):
        return self.table.labels()

    def estimates(self) -> dict:
        return dict(zip(self.labels(), self.theta.tolist()))

    def value(self, label: str, group=0) -> float:
        if isinstance(group, str):
            group = self.groups.index(group)
        return self.table.value(self.theta, label, group)

    def matrices(self, group=0):
        if isinstance(group, str):
            group = self.groups.index(group)
        return self.table.matrices(self.theta, group)

    def implied(self, group=0):
        if isinstance(group, str):
            group = self.groups.index(group)
        return implied_moments(self.table, self.theta, group)

    def factor_correlations(self, group=0) -> np.ndarray:
        phi = self.matrices(group)[1]
        sd = np.sqrt(np.diag(phi))
        return phi / np.outer(sd, sd)

    def standard_error(self, label: str, robust=True) -> float:
        labels = self.labels()
        k = labels.index(label)
        se = self.se_robust if robust and self.se_robust is not None else self.se
        return float(se[k])


def _estimate(
    table: ParameterTable,
    moments: Sequence[SampleMoments],
    start=None,
    multiplier="n-1",
    max_iter=10_000,
    gtol=1e-6,
):
    problem = Problem(table, moments, multiplier)
    for m, spec in zip(problem.moments, table.specs):
        if m.n <= spec.n_free():
            warnings.warn(
                f"group {m.group}: n={m.n} does not exceed the number of free parameters",
                RuntimeWarning,
                stacklevel=3,
            )
    x0 = start_values(table, problem.moments) if start is None else np.asarray(start, float)
    if table.size == 0:
        f = problem.value(x0)
        opt = OptimizeResult(x0, f, np.zeros(0), True, 0, 0.0, "no free parameters")
    else:
        opt = quasi_newton(problem, x0, max_iter=max_iter, gtol=gtol)
    if not opt.converged:
        log.warning("optimizer stopped without convergence: %s", opt.message)
    return problem, opt


def _assemble(problem: Problem, opt: OptimizeResult, robust=True, use_scaled=True) -> FitResult:
    from . import indices as _indices
    from . import robust as _robust

    table = problem.table
    info = problem.information(opt.theta) if table.size else np.zeros((0, 0))
    identified = True
    se = np.zeros(0)
    notes = []
    if table.size:
        ev = np.linalg.eigvalsh(info)
        if ev.min() <= 1e-10 * max(1.0, ev.max()):
            identified = False
            notes.append("information matrix is rank deficient; model may not be identified")
            se = np.full(table.size, np.nan)
        else:
            se = np.sqrt(np.diag(np.linalg.inv(info)) / problem.n_eff)
    if not opt.converged:
        notes.append(f"optimizer: {opt.message}")
    fit = FitResult(
        table=table,
        theta=opt.theta,
        fmin=opt.fun,
        chisq=problem.n_eff * max(opt.fun, 0.0),
        df=table.df(),
        n_obs=tuple(m.n for m in problem.moments),
        n_eff=problem.n_eff,
        multiplier=problem.multiplier,
        converged=opt.converged,
        n_iter=opt.n_iter,
        grad_norm=opt.grad_norm,
        identified=identified,
        se=se,
        notes=notes,
        problem=problem,
    )
    if robust and identified:
        fit.sb_scale, fit.chisq_sb = _robust.satorra_bentler(fit, problem.moments)
        fit.se_robust = _robust.robust_se(fit, problem.moments)
    fit.indices = _indices.fit_indices(fit, problem.moments, use_scaled=use_scaled and robust)
    return fit


def fit_model(
    spec: FactorModelSpec,
    moments: SampleMoments,
    start=None,
    multiplier: str = "n-1",
    robust: bool = True,
    use_scaled: bool = True,
    max_iter: int = 10_000,
    gtol: float = 1e-6,
) -> FitResult:
    """Fit a single-group CFA by maximum likelihood."""
    problems = spec.validate()
    if problems:
        raise ValueError("model is not identified: " + "; ".join(problems))
    if spec.df() < 0:
        raise ValueError(f"model has negative degrees of freedom ({spec.df()})")
    table = ParameterTable([spec], [moments.group])
    return fit_table(table, [moments], start, multiplier, robust, use_scaled, max_iter, gtol)


def fit_table(
    table: ParameterTable,
    moments: Sequence[SampleMoments],
    start=None,
    multiplier: str = "n-1",
    robust: bool = True,
    use_scaled: bool = True,
    max_iter: int = 10_000,
    gtol: float = 1e-6,
) -> FitResult:
    """Fit a prebuilt parameter table; the common core of the fit functions."""
    if table.df() < 0:
        raise ValueError(f"model has negative degrees of freedom ({table.df()})")
    problem, opt = _estimate(table, moments, start, multiplier, max_iter, gtol)
    fit = _assemble(problem, opt, robust=robust, use_scaled=use_scaled)
    fit.options = dict(
        multiplier=multiplier, robust=robust, use_scaled=use_scaled, max_iter=max_iter, gtol=gtol
    )
    return fit


def fit_multigroup(
    specs: Sequence[FactorModelSpec],
    moments: Sequence[SampleMoments],
    groups=None,
    ties=(),
    start=None,
    multiplier: str = "n-1",
    robust: bool = True,
    use_scaled: bool = True,
    max_iter: int = 10_000,
    gtol: float = 1e-6,
) -> FitResult:
    """Simultaneous fit over groups with cross-group equality ties."""
    if groups is None:
        groups = [m.group for m in moments]
    table = ParameterTable(specs, groups, ties)
    return fit_table(table, moments, start, multiplier, robust, use_scaled, max_iter, gtol)
