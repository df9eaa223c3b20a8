"""Exploratory factor analysis and iterative item reduction.

Extraction is principal-axis factoring on the correlation matrix; the
oblique rotation is promax (varimax pre-rotation, power target, oblique
Procrustes), following the usual R ``promax`` recipe.
"""

from __future__ import annotations

import dataclasses
import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .ingest import SampleMoments
from .scale import ResponseMatrix, ScaleDefinition

log = logging.getLogger(__name__)


class EfaError(RuntimeError):
    pass


class ItemReductionError(RuntimeError):
    pass


@dataclass(frozen=True)
class EfaSolution:
    items: tuple[str, ...]
    loadings: np.ndarray
    factor_correlations: np.ndarray
    communalities: np.ndarray
    eigenvalues: np.ndarray
    extraction: str = "principal_axis"
    rotation: str = "none"
    rotation_matrix: np.ndarray | None = None
    n_iter: int = 0
    heywood: bool = False
    converged: bool = True

    @property
    def q(self) -> int:
        return self.loadings.shape[1]


def _correlation(source):
    if isinstance(source, SampleMoments):
        cov, items = source.cov, source.items
    elif isinstance(source, ResponseMatrix):
        x = np.asarray(source.rows, dtype=float)
        cov, items = np.cov(x, rowvar=False), source.items
    else:
        cov = np.asarray(source, dtype=float)
        items = tuple(f"V{i + 1}" for i in range(cov.shape[0]))
    sd = np.sqrt(np.diag(cov))
    if (sd == 0).any():
        raise EfaError("an item has zero variance")
    return cov / np.outer(sd, sd), tuple(items)


def _align_signs(loadings):
    signs = np.where(loadings.sum(axis=0) < 0, -1.0, 1.0)
    return loadings * signs, signs


def extract_factors(
    source, q: int, max_iter: int = 200, tol: float = 1e-6, strict: bool = False
) -> EfaSolution:
    """Unrotated principal-axis solution with ``q`` factors.

    ``source`` is a :class:`SampleMoments`, a :class:`ResponseMatrix` or a
    covariance/correlation array. Communalities start at the squared
    multiple correlations and are iterated until they change by less than
    ``tol``. Communalities above 1 (Heywood cases) are clamped with a
    warning.

    Factors with only two salient items can make the iteration crawl. If
    ``max_iter`` is reached the last solution is returned with
    ``converged=False`` and a warning, or :class:`EfaError` is raised when
    ``strict``.
    """
    if q < 1:
        raise ValueError("need at least one factor")
    R, items = _correlation(source)
    p = R.shape[0]
    if q > p:
        raise ValueError("more factors than items")
    try:
        h2 = 1.0 - 1.0 / np.diag(np.linalg.inv(R))
    except np.linalg.LinAlgError as exc:
        raise EfaError("correlation matrix is singular") from exc
    heywood = False
    for it in range(1, max_iter + 1):
        Rr = R.copy()
        np.fill_diagonal(Rr, h2)
        vals, vecs = np.linalg.eigh(Rr)
        order = np.argsort(vals)[::-1][:q]
        vals, vecs = vals[order], vecs[:, order]
        L = vecs * np.sqrt(np.clip(vals, 0.0, None))
        new = (L**2).sum(axis=1)
        if (new > 1.0).any():
            heywood = True
            new = np.minimum(new, 1.0)
        change = np.abs(new - h2).max()
        h2 = new
        if change < tol:
            converged = True
            break
    else:
        converged = False
        msg = f"principal-axis iterations did not converge in {max_iter} steps"
        if strict:
            raise EfaError(msg)
        warnings.warn(f"{msg} (last change {change:.2e})", RuntimeWarning, stacklevel=2)
    if heywood:
        warnings.warn("Heywood case: communality clamped to 1", RuntimeWarning, stacklevel=2)
    L, _ = _align_signs(L)
    return EfaSolution(
        items=items,
        loadings=L,
        factor_correlations=np.eye(q),
        communalities=(L**2).sum(axis=1),
        eigenvalues=np.clip(vals, 0.0, None),
        n_iter=it,
        heywood=heywood,
        converged=converged,
    )


def varimax(loadings, normalize=True, eps=1e-10, max_iter=1000):
    """Orthogonal varimax rotation; returns (rotated loadings, rotation matrix)."""
    x = np.array(loadings, dtype=float)
    p, k = x.shape
    if k < 2:
        return x, np.eye(k)
    if normalize:
        sc = np.sqrt((x**2).sum(axis=1))
        sc[sc == 0] = 1.0
        x = x / sc[:, None]
    T = np.eye(k)
    d = 0.0
    for _ in range(max_iter):
        z = x @ T
        B = x.T @ (z**3 - z @ np.diag((z**2).sum(axis=0)) / p)
        u, s, vh = np.linalg.svd(B)
        T = u @ vh
        d_old, d = d, s.sum()
        if d < d_old * (1 + eps):
            break
    z = x @ T
    if normalize:
        z = z * sc[:, None]
    return z, T


def rotate_promax(sol: EfaSolution, kappa: float = 4) -> EfaSolution:
    """Promax rotation of an unrotated solution.

    Returns the pattern matrix, the factor correlation matrix and the full
    transformation (``pattern = unrotated @ rotation_matrix``).
    """
    q = sol.q
    if q < 2:
        return dataclasses.replace(sol, rotation="promax", rotation_matrix=np.eye(q))
    x, T_vm = varimax(sol.loadings)
    target = x * np.abs(x) ** (kappa - 1)
    U, *_ = np.linalg.lstsq(x, target, rcond=None)
    try:
        d = np.diag(np.linalg.inv(U.T @ U))
    except np.linalg.LinAlgError as exc:
        raise EfaError("promax transformation is singular") from exc
    U = U @ np.diag(np.sqrt(d))
    pattern = x @ U
    T = T_vm @ U
    Tinv = np.linalg.inv(T)
    phi = Tinv @ Tinv.T
    pattern, signs = _align_signs(pattern)
    phi = phi * np.outer(signs, signs)
    T = T * signs
    return dataclasses.replace(
        sol,
        loadings=pattern,
        factor_correlations=(phi + phi.T) / 2,
        communalities=np.einsum("ij,jk,ik->i", pattern, phi, pattern),
        rotation="promax",
        rotation_matrix=T,
    )


@dataclass(frozen=True)
class ReductionPolicy:
    """Thresholds for dropping items after each EFA.

    ``strict_min_loading`` replaces ``min_loading`` for factors that still
    have more than ``strict_above`` items.
    """

    min_loading: float = 0.5
    max_crossloading: float = 0.35
    strict_min_loading: float | None = None
    strict_above: int = 3
    enforce_theorized_factor: bool = True
    similar_item_pairs: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        for v in (self.min_loading, self.max_crossloading, self.strict_min_loading):
            if v is not None and not 0 < v < 1:
                raise ValueError("thresholds must lie strictly between 0 and 1")


ROUND_ONE = ReductionPolicy(min_loading=0.5, max_crossloading=0.35)
ROUND_TWO = ReductionPolicy(min_loading=0.5, max_crossloading=0.3, strict_min_loading=0.7)


@dataclass(frozen=True)
class Removal:
    iteration: int
    item: str
    reason: str
    primary_loading: float
    max_crossloading: float

    def line(self) -> str:
        return (
            f"{self.iteration}\t{self.item}\t{self.reason}\t"
            f"{self.primary_loading:.6f}\t{self.max_crossloading:.6f}"
        )


def match_factors(loadings, items, scale: ScaleDefinition):
    """Assign EFA columns to theorized factors maximizing summed |loading|.

    Returns ``(column of each theorized factor, loadings with columns
    reordered to theorized order and signs aligned)``.
    """
    names = scale.factor_names
    score = np.zeros((len(names), loadings.shape[1]))
    for k, f in enumerate(scale.factors):
        rows = [items.index(i) for i in f.items if i in items]
        score[k] = np.abs(loadings[rows]).sum(axis=0)
    _, cols = linear_sum_assignment(-score)
    L = loadings[:, cols].copy()
    for k, f in enumerate(scale.factors):
        rows = [items.index(i) for i in f.items if i in items]
        if L[rows, k].sum() < 0:
            L[:, k] *= -1
    return cols, L


def item_diagnostics(m: ResponseMatrix, scale: ScaleDefinition, items, kappa=4):
    """Promax pattern aligned to the theorized factors plus per-item summaries."""
    sub = ResponseMatrix(tuple(items), m.columns(items), m.group)
    sol = rotate_promax(extract_factors(sub, len(scale.factors)), kappa)
    _, L = match_factors(sol.loadings, tuple(items), scale)
    home = np.array([scale.factor_names.index(scale.factor_of(i)) for i in items])
    primary = L[np.arange(len(items)), home]
    others = np.abs(L).copy()
    others[np.arange(len(items)), home] = -np.inf
    max_cross = others.max(axis=1) if L.shape[1] > 1 else np.zeros(len(items))
    wrong = np.abs(L).argmax(axis=1) != home
    return L, primary, max_cross, wrong


def reduce_item_pool(
    m: ResponseMatrix, scale: ScaleDefinition, policy: ReductionPolicy = ROUND_ONE
):
    """Drop items one at a time until every remaining item satisfies ``policy``.

    Each iteration runs PAF + promax on the remaining items and removes the
    single worst violator. Priority: loading highest on a non-theorized
    factor, then cross-loading above the threshold, then primary loading
    below the threshold, then the weaker item of a listed similar pair.
    Ties go to the lowest primary loading, then the item code.

    Returns ``(kept items, list of Removal)``.
    """
    items = [i for i in scale.items if i in m.items]
    log_entries: list[Removal] = []
    iteration = 0
    while True:
        iteration += 1
        L, primary, max_cross, wrong = item_diagnostics(m, scale, items)
        size = {f.name: sum(i in items for i in f.items) for f in scale.factors}
        stats = {
            item: (float(primary[k]), float(max_cross[k]), bool(wrong[k]))
            for k, item in enumerate(items)
        }

        def threshold(item):
            f = scale.factor_of(item)
            if policy.strict_min_loading is not None and size[f] > policy.strict_above:
                return policy.strict_min_loading
            return policy.min_loading

        candidates = []
        if policy.enforce_theorized_factor:
            cand = [i for i in items if stats[i][2]]
            candidates.append(("wrong factor", sorted(cand, key=lambda i: (stats[i][0], i))))
        cand = [i for i in items if stats[i][1] > policy.max_crossloading]
        candidates.append(
            ("cross-loading", sorted(cand, key=lambda i: (-stats[i][1], stats[i][0], i)))
        )
        cand = [i for i in items if stats[i][0] < threshold(i)]
        candidates.append(("low loading", sorted(cand, key=lambda i: (stats[i][0], i))))
        cand = []
        for a, b in policy.similar_item_pairs:
            if a in items and b in items and scale.factor_of(a) == scale.factor_of(b):
                if size[scale.factor_of(a)] > policy.strict_above:
                    cand.append(min((a, b), key=lambda i: (stats[i][0], i)))
        candidates.append(("similar wording", sorted(set(cand), key=lambda i: (stats[i][0], i))))

        choice = next(((reason, c[0]) for reason, c in candidates if c), None)
        if choice is None:
            return items, log_entries
        reason, item = choice
        f = scale.factor_of(item)
        if size[f] - 1 < 2:
            raise ItemReductionError(
                f"removing {item} ({reason}, primary loading {stats[item][0]:.3f}) "
                f"would leave factor {f} with fewer than 2 items"
            )
        entry = Removal(iteration, item, reason, stats[item][0], stats[item][1])
        log.info("removed %s", entry.line())
        log_entries.append(entry)
        items.remove(item)
