"""Multigroup CFA and the measurement-invariance ladder.

Levels are nested by cross-group equality ties on slot labels:

* configural: same pattern in every group, nothing tied, factor means 0;
* metric: all free loadings tied;
* scalar: loadings and intercepts tied, factor means free outside the
  reference group;
* partial scalar: scalar with some intercepts released.

Every fit goes through :func:`mcms.sem.fit_table`, so pooled statistics
use ``T = sum_g n'_g F_g``.
"""

from __future__ import annotations

import dataclasses
import logging
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .ingest import SampleMoments
from .sem import FactorModelSpec, FitResult, ParameterTable, fit_table, slot_label

log = logging.getLogger(__name__)

LEVELS = ("configural", "metric", "full_scalar", "partial_scalar")
DECISION_MODES = ("cfi-only", "conjunctive")
CFI_CUTOFF = 0.010
RMSEA_CUTOFF = 0.015


@dataclass(frozen=True)
class MultigroupSpec:
    """A base pattern replicated over groups plus the cross-group ties.

    ``level`` is one of :data:`LEVELS`. Factor means are free in every
    group except ``reference_group`` at the scalar levels and fixed at 0
    everywhere otherwise. Intercepts are free in every group; whether they
    are equal across groups is governed by ``equality_sets``.
    """

    base: FactorModelSpec
    groups: tuple[str, ...]
    level: str = "configural"
    equality_sets: tuple[str, ...] = ()
    freed_intercepts: tuple[str, ...] = ()
    reference_group: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "equality_sets", tuple(self.equality_sets))
        object.__setattr__(self, "freed_intercepts", tuple(self.freed_intercepts))
        if self.reference_group is None:
            object.__setattr__(self, "reference_group", min(self.groups))
        if self.level not in LEVELS:
            raise ValueError(f"unknown invariance level {self.level!r}")
        if len(self.groups) < 2:
            raise ValueError("invariance testing needs at least two groups")
        if len(set(self.groups)) != len(self.groups):
            raise ValueError("group labels must be unique")
        if self.reference_group not in self.groups:
            raise ValueError(f"reference group {self.reference_group!r} is not a group")
        unknown = set(self.freed_intercepts) - set(self.base.items)
        if unknown:
            raise ValueError(f"freed intercepts not in the model: {sorted(unknown)}")

    @property
    def scalar(self) -> bool:
        return self.level in ("full_scalar", "partial_scalar")

    def group_specs(self) -> list[FactorModelSpec]:
        base = self.base
        tau = np.full(base.p, np.nan)
        out = []
        for g in self.groups:
            free_means = self.scalar and g != self.reference_group
            kappa = np.full(base.q, np.nan) if free_means else np.zeros(base.q)
            out.append(base.replace(mean_structure=True, intercepts=tau, factor_means=kappa))
        return out

    def table(self) -> ParameterTable:
        return ParameterTable(self.group_specs(), self.groups, self.equality_sets)

    def df(self) -> int:
        return self.table().df()


def loading_labels(spec: FactorModelSpec) -> tuple[str, ...]:
    return tuple(
        slot_label(spec, "lambda", i, j) for i, j in zip(*np.nonzero(np.isnan(spec.loadings)))
    )


def intercept_labels(spec: FactorModelSpec, exclude=()) -> tuple[str, ...]:
    return tuple(f"tau[{item}]" for item in spec.items if item not in exclude)


def _ordered(group_moments) -> list[SampleMoments]:
    if isinstance(group_moments, Mapping):
        return [
            dataclasses.replace(m, group=str(g)) if m.group != g else m
            for g, m in group_moments.items()
        ]
    return list(group_moments)


def _fit(mg: MultigroupSpec, moments, start, options) -> FitResult:
    fit = fit_table(mg.table(), moments, start=start, **options)
    fit.multigroup = mg
    return fit


def _warm_start(mg: MultigroupSpec, prev: FitResult) -> np.ndarray:
    """Parameter vector for ``mg`` from the estimates of a nested fit."""
    table = mg.table()
    per_group = [prev.matrices(g) for g in mg.groups]
    return table.pack(per_group)


def _options(fit: FitResult, overrides=None) -> dict:
    opts = dict(fit.options)
    opts.update(overrides or {})
    return opts


def fit_configural(
    base: FactorModelSpec,
    group_moments,
    reference_group: str | None = None,
    multiplier: str = "n-1",
    robust: bool = True,
    use_scaled: bool = True,
    max_iter: int = 10_000,
    gtol: float = 1e-6,
) -> FitResult:
    """Simultaneous fit with the same pattern and no ties across groups.

    ``group_moments`` is a sequence of :class:`SampleMoments` (labels taken
    from ``.group``) or a mapping label -> moments. The mean structure is
    always on; intercepts are free and factor means fixed at 0 in every
    group, so df is the sum of the single-group df.
    """
    moments = _ordered(group_moments)
    if len(moments) < 2:
        raise ValueError("configural model needs at least two groups")
    for m in moments:
        if np.linalg.matrix_rank(m.cov) < m.p:
            raise ValueError(f"group {m.group}: sample covariance matrix is singular")
    mg = MultigroupSpec(base, [m.group for m in moments], "configural", (), (), reference_group)
    options = dict(
        multiplier=multiplier, robust=robust, use_scaled=use_scaled, max_iter=max_iter, gtol=gtol
    )
    return _fit(mg, moments, None, options)


def constrain_metric(configural: FitResult, **overrides) -> FitResult:
    """Tie every free loading across groups; factor variances stay free."""
    prev = configural.multigroup
    mg = dataclasses.replace(prev, level="metric", equality_sets=loading_labels(prev.base))
    start = _warm_start(mg, configural)
    return _fit(mg, configural.moments, start, _options(configural, overrides))


def _check_tied_per_factor(base: FactorModelSpec, freed):
    for j, f in enumerate(base.factors):
        items = [base.items[i] for i in np.nonzero(base.loadings[:, j] != 0)[0]]
        tied = [i for i in items if i not in freed]
        if len(tied) < 2:
            warnings.warn(
                f"factor {f} keeps {len(tied)} tied intercept(s); latent mean may be "
                "weakly identified",
                RuntimeWarning,
                stacklevel=3,
            )


def constrain_scalar(metric: FitResult, freed: Sequence[str] = (), **overrides) -> FitResult:
    """Tie intercepts (except ``freed``) on top of the metric ties.

    Factor means become free in every group but the reference group. With
    no freed items this is the full scalar model, otherwise partial scalar.
    """
    prev = metric.multigroup
    if prev is None or prev.level == "configural":
        raise ValueError("scalar constraints require a metric (or scalar) fit")
    freed = tuple(freed)
    _check_tied_per_factor(prev.base, freed)
    mg = dataclasses.replace(
        prev,
        level="partial_scalar" if freed else "full_scalar",
        equality_sets=loading_labels(prev.base) + intercept_labels(prev.base, freed),
        freed_intercepts=freed,
    )
    return _fit(mg, metric.moments, _warm_start(mg, metric), _options(metric, overrides))


@dataclass(frozen=True)
class Decision:
    cfi_drop: float
    rmsea_rise: float
    mode: str
    invariant: bool

    @property
    def label(self) -> str:
        return "invariant" if self.invariant else "non-invariant"


def decide(cfi_drop: float, rmsea_rise: float, mode: str = "cfi-only") -> Decision:
    """Apply the change-in-fit rule.

    ``cfi-only``: non-invariant iff the CFI drop exceeds 0.010.
    ``conjunctive``: additionally requires the RMSEA rise to exceed 0.015.
    """
    if mode not in DECISION_MODES:
        raise ValueError(f"decision mode must be one of {DECISION_MODES}")
    worse = cfi_drop > CFI_CUTOFF
    if mode == "conjunctive":
        worse = worse and rmsea_rise > RMSEA_CUTOFF
    return Decision(float(cfi_drop), float(rmsea_rise), mode, not worse)


def invariance_decision(prev: FitResult, cur: FitResult, mode: str = "cfi-only") -> Decision:
    """Compare a constrained fit with the less constrained one it nests in."""
    return decide(
        prev.indices.cfi - cur.indices.cfi, cur.indices.rmsea - prev.indices.rmsea, mode
    )


@dataclass(frozen=True)
class SearchStep:
    iteration: int
    candidates: tuple[tuple[str, float], ...]
    released: str
    chisq: float
    decision: Decision

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "candidates": [{"item": i, "chisq": c} for i, c in self.candidates],
            "released": self.released,
            "chisq": self.chisq,
            "cfi_drop": self.decision.cfi_drop,
            "rmsea_rise": self.decision.rmsea_rise,
            "invariant": self.decision.invariant,
        }


@dataclass
class SearchResult:
    freed: tuple[str, ...]
    fit: FitResult
    decision: Decision
    trace: list[SearchStep] = field(default_factory=list)
    exhausted: bool = False


def releasable(base: FactorModelSpec, freed) -> list[str]:
    """Tied intercepts whose release keeps at least two tied per factor."""
    out = []
    for j in range(base.q):
        items = [base.items[i] for i in np.nonzero(base.loadings[:, j] != 0)[0]]
        tied = [i for i in items if i not in freed]
        if len(tied) > 2:
            out.extend(tied)
    return sorted(set(out) - set(freed), key=base.items.index)


def partial_scalar_search(
    metric: FitResult,
    max_freed: int | None = None,
    mode: str = "cfi-only",
    start: FitResult | None = None,
    stop_when_invariant: bool = True,
) -> SearchResult:
    """Greedy release of intercepts until the scalar model passes.

    Each iteration refits the model once per releasable intercept and keeps
    the release giving the lowest ML chi-square (ties: item order in the
    model, i.e. the earliest item code). The search starts from the full
    scalar model (``start`` if given) and always releases at least one
    intercept, since it is only entered after the full model failed. It
    stops once the decision against ``metric`` passes (if
    ``stop_when_invariant``), when ``max_freed`` intercepts are free, or
    when no intercept can be released without leaving a factor with fewer
    than two tied intercepts.
    """
    base = metric.multigroup.base
    current = start if start is not None else constrain_scalar(metric)
    freed: tuple[str, ...] = tuple(current.multigroup.freed_intercepts)
    budget = max_freed if max_freed is not None else base.p
    trace: list[SearchStep] = []
    decision = invariance_decision(metric, current, mode)
    quick = dict(robust=False, use_scaled=False)
    while len(freed) < budget:
        pool = releasable(base, freed)
        if not pool:
            break
        scores = []
        for item in pool:
            cand = constrain_scalar(current, freed + (item,), **quick)
            scores.append((item, float(cand.chisq)))
            log.debug("release %s: chisq %.6f", item, cand.chisq)
        best = min(scores, key=lambda s: (round(s[1], 8), base.items.index(s[0])))[0]
        freed = freed + (best,)
        current = constrain_scalar(current, freed)
        decision = invariance_decision(metric, current, mode)
        trace.append(SearchStep(len(trace) + 1, tuple(scores), best, current.chisq, decision))
        log.info("released %s (CFI drop %.4f)", best, decision.cfi_drop)
        if decision.invariant and stop_when_invariant:
            break
    exhausted = not decision.invariant
    return SearchResult(freed, current, decision, trace, exhausted)


@dataclass(frozen=True)
class LatentMeans:
    groups: tuple[str, ...]
    factors: tuple[str, ...]
    reference_group: str
    estimates: np.ndarray
    se: np.ndarray

    def to_dict(self) -> dict:
        return {
            "reference_group": self.reference_group,
            "groups": {
                g: {
                    f: {"estimate": float(self.estimates[a, b]), "se": float(self.se[a, b])}
                    for b, f in enumerate(self.factors)
                }
                for a, g in enumerate(self.groups)
            },
        }


def latent_means(fit: FitResult, robust: bool = True) -> LatentMeans:
    """Factor means per group (reference group 0) with standard errors."""
    mg = fit.multigroup
    if mg is None or not mg.scalar:
        raise ValueError("latent means need a (partial) scalar invariance fit")
    labels = fit.labels()
    se_vec = fit.se_robust if robust and fit.se_robust is not None else fit.se
    q = mg.base.q
    est = np.zeros((len(mg.groups), q))
    se = np.zeros((len(mg.groups), q))
    for a, g in enumerate(mg.groups):
        est[a] = fit.matrices(a)[4]
        for b, f in enumerate(mg.base.factors):
            label = f"{g}:kappa[{f}]"
            if label in labels:
                se[a, b] = se_vec[labels.index(label)]
    return LatentMeans(mg.groups, mg.base.factors, mg.reference_group, est, se)


@dataclass(frozen=True)
class LevelRow:
    level: str
    chisq: float
    chisq_sb: float | None
    df: int
    cfi: float
    rmsea: float
    cfi_delta: float | None
    rmsea_delta: float | None
    decision: str | None
    compared_with: str | None
    n_free: int
    converged: bool

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class InvarianceReport:
    groups: tuple[str, ...]
    reference_group: str
    mode: str
    fits: dict
    rows: list[LevelRow]
    freed: tuple[str, ...]
    search: SearchResult | None
    latent_means: LatentMeans | None
    notes: list[str] = field(default_factory=list)

    def row(self, level: str) -> LevelRow:
        return next(r for r in self.rows if r.level == level)

    def to_dict(self) -> dict:
        return {
            "groups": list(self.groups),
            "reference_group": self.reference_group,
            "decision_mode": self.mode,
            "levels": [r.to_dict() for r in self.rows],
            "freed_intercepts": list(self.freed),
            "search_trace": [s.to_dict() for s in self.search.trace] if self.search else [],
            "latent_means": self.latent_means.to_dict() if self.latent_means else None,
            "notes": list(self.notes),
        }


def _row(level, fit, prev_name=None, prev=None, mode="cfi-only") -> LevelRow:
    ix = fit.indices
    if prev is None:
        cfi_d = rmsea_d = decision = None
    else:
        d = invariance_decision(prev, fit, mode)
        cfi_d, rmsea_d, decision = abs(d.cfi_drop), abs(d.rmsea_rise), d.label
    return LevelRow(
        level,
        float(fit.chisq),
        None if fit.chisq_sb is None else float(fit.chisq_sb),
        int(fit.df),
        float(ix.cfi),
        float(ix.rmsea),
        cfi_d,
        rmsea_d,
        decision,
        prev_name,
        int(fit.table.size),
        bool(fit.converged),
    )


def run_invariance(
    base: FactorModelSpec,
    group_moments,
    mode: str = "cfi-only",
    max_freed: int | None = None,
    reference_group: str | None = None,
    freed: Sequence[str] | None = None,
    multiplier: str = "n-1",
    robust: bool = True,
    use_scaled: bool = True,
) -> InvarianceReport:
    """Configural, metric, full scalar and (if needed) partial scalar fits.

    Each level is judged against the previous one; the partial model is
    judged against the metric model. Pass ``freed`` to fit a given partial
    model instead of searching for one.
    """
    decide(0.0, 0.0, mode)
    conf = fit_configural(
        base, group_moments, reference_group, multiplier=multiplier, robust=robust,
        use_scaled=use_scaled,
    )
    metric = constrain_metric(conf)
    full = constrain_scalar(metric)
    fits = {"configural": conf, "metric": metric, "full_scalar": full}
    rows = [
        _row("configural", conf),
        _row("metric", metric, "configural", conf, mode),
        _row("full_scalar", full, "metric", metric, mode),
    ]
    notes = []
    if rows[1].decision == "non-invariant":
        notes.append("metric invariance rejected; scalar levels are reported for completeness")
    search = None
    final = full
    chosen: tuple[str, ...] = ()
    if freed:
        chosen = tuple(freed)
        final = constrain_scalar(metric, chosen)
    elif rows[2].decision == "non-invariant":
        search = partial_scalar_search(metric, max_freed, mode, start=full)
        chosen, final = search.freed, search.fit
        if search.exhausted:
            notes.append("partial scalar search ended without reaching invariance")
    if final is not full:
        fits["partial_scalar"] = final
        rows.append(_row("partial_scalar", final, "metric", metric, mode))
    scalar_ok = invariance_decision(metric, final, mode).invariant
    means = None
    if scalar_ok:
        means = latent_means(final, robust=robust)
    else:
        notes.append("latent means not estimated: scalar invariance not established")
    return InvarianceReport(
        groups=conf.multigroup.groups,
        reference_group=conf.multigroup.reference_group,
        mode=mode,
        fits=fits,
        rows=rows,
        freed=chosen,
        search=search,
        latent_means=means,
        notes=notes,
    )
