"""Confirmatory factor model specifications.

Patterns are float arrays in which ``nan`` marks a free parameter and any
number is a fixed value, the same convention used by most CFA code::

    loadings[i, j]   item i on factor j          (p x q)
    factor_cov[k, l] factor (co)variances        (q x q, symmetric)
    residuals[i]     residual variance of item i (p,)
    intercepts[i]    item intercept              (p,)
    factor_means[k]  factor mean                 (q,)
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import yaml

from ..scale import ScaleDefinition

FREE = np.nan

# Intrinsic motivation uncorrelated with both external-regulation factors.
MCMS_RESTRICTED_PAIRS = (
    ("Intrinsic Motivation", "Material External Regulation"),
    ("Intrinsic Motivation", "Social External Regulation"),
)


def _frozen(a, shape):
    a = np.array(a, dtype=float).reshape(shape)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FactorModelSpec:
    items: tuple[str, ...]
    factors: tuple[str, ...]
    loadings: np.ndarray
    factor_cov: np.ndarray
    residuals: np.ndarray
    mean_structure: bool = False
    intercepts: np.ndarray | None = None
    factor_means: np.ndarray | None = None

    def __post_init__(self):
        p, q = len(self.items), len(self.factors)
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "factors", tuple(self.factors))
        object.__setattr__(self, "loadings", _frozen(self.loadings, (p, q)))
        object.__setattr__(self, "factor_cov", _frozen(self.factor_cov, (q, q)))
        object.__setattr__(self, "residuals", _frozen(self.residuals, (p,)))
        tau = np.full(p, FREE) if self.intercepts is None else self.intercepts
        kappa = np.zeros(q) if self.factor_means is None else self.factor_means
        object.__setattr__(self, "intercepts", _frozen(tau, (p,)))
        object.__setattr__(self, "factor_means", _frozen(kappa, (q,)))
        fc = self.factor_cov
        same = (np.isnan(fc) & np.isnan(fc.T)) | (fc == fc.T)
        if not same.all():
            raise ValueError("factor covariance pattern must be symmetric")

    def __eq__(self, other):
        if not isinstance(other, FactorModelSpec):
            return NotImplemented
        return (
            self.items == other.items
            and self.factors == other.factors
            and self.mean_structure == other.mean_structure
            and all(
                np.array_equal(getattr(self, f), getattr(other, f), equal_nan=True)
                for f in ("loadings", "factor_cov", "residuals", "intercepts", "factor_means")
            )
        )

    __hash__ = None

    @property
    def p(self) -> int:
        return len(self.items)

    @property
    def q(self) -> int:
        return len(self.factors)

    def n_free_covariance(self) -> int:
        tri = np.tril(np.ones((self.q, self.q), dtype=bool))
        return int(
            np.isnan(self.loadings).sum()
            + np.isnan(self.factor_cov[tri]).sum()
            + np.isnan(self.residuals).sum()
        )

    def n_free_mean(self) -> int:
        if not self.mean_structure:
            return 0
        return int(np.isnan(self.intercepts).sum() + np.isnan(self.factor_means).sum())

    def n_free(self) -> int:
        return self.n_free_covariance() + self.n_free_mean()

    def n_moments(self) -> int:
        p = self.p
        return p * (p + 1) // 2 + (p if self.mean_structure else 0)

    def df(self) -> int:
        return self.n_moments() - self.n_free()

    def validate(self) -> list[str]:
        problems = []
        ld = self.loadings
        loads = np.isnan(ld) | (ld != 0)
        for i, item in enumerate(self.items):
            if not loads[i].any():
                problems.append(f"item {item} loads on no factor")
        for k, f in enumerate(self.factors):
            if np.isnan(self.factor_cov[k, k]):
                n_markers = int((ld[:, k] == 1).sum())
                if n_markers != 1:
                    problems.append(
                        f"factor {f} has free variance and {n_markers} markers fixed at 1"
                    )
        return problems

    def replace(self, **changes) -> "FactorModelSpec":
        return dataclasses.replace(self, **changes)

    def permuted(self, items: Iterable[str]) -> "FactorModelSpec":
        """The same model with item rows in a different order."""
        items = tuple(items)
        idx = [self.items.index(i) for i in items]
        return self.replace(
            items=items,
            loadings=self.loadings[idx],
            residuals=self.residuals[idx],
            intercepts=self.intercepts[idx],
        )


def compile_model(
    scale: ScaleDefinition,
    zero_covariances: Iterable[tuple[str, str]] = (),
    mean_structure: bool = False,
) -> FactorModelSpec:
    """Independent-clusters CFA for a scale: one factor per scale factor.

    Each item loads only on its own factor, the marker loading is fixed to
    1, all factor (co)variances are free unless listed in
    ``zero_covariances``, residuals are uncorrelated. With a mean
    structure all intercepts are free and factor means are fixed at 0.
    """
    items = scale.items
    factors = scale.factor_names
    p, q = len(items), len(factors)
    lam = np.zeros((p, q))
    for k, f in enumerate(scale.factors):
        for item in f.items:
            i = items.index(item)
            lam[i, k] = 1.0 if item == f.marker else FREE
    phi = np.full((q, q), FREE)
    for a, b in zero_covariances:
        ka, kb = factors.index(a), factors.index(b)
        phi[ka, kb] = phi[kb, ka] = 0.0
    return FactorModelSpec(
        items=items,
        factors=factors,
        loadings=lam,
        factor_cov=phi,
        residuals=np.full(p, FREE),
        mean_structure=mean_structure,
        intercepts=np.full(p, FREE),
        factor_means=np.zeros(q),
    )


def _encode(v):
    return "free" if np.isnan(v) else float(v)


def _decode(v):
    if isinstance(v, str):
        if v.strip().lower() != "free":
            raise ValueError(f"pattern entry must be 'free' or a number, got {v!r}")
        return FREE
    return float(v)


def spec_to_dict(spec: FactorModelSpec) -> dict:
    return {
        "items": list(spec.items),
        "factors": list(spec.factors),
        "loadings": [[_encode(v) for v in row] for row in spec.loadings],
        "factor_cov": [[_encode(v) for v in row] for row in spec.factor_cov],
        "residuals": [_encode(v) for v in spec.residuals],
        "mean_structure": bool(spec.mean_structure),
        "intercepts": [_encode(v) for v in spec.intercepts],
        "factor_means": [_encode(v) for v in spec.factor_means],
    }


def spec_from_dict(doc) -> FactorModelSpec:
    def arr(key):
        return np.array([[_decode(v) for v in row] for row in doc[key]])

    return FactorModelSpec(
        items=tuple(doc["items"]),
        factors=tuple(doc["factors"]),
        loadings=arr("loadings"),
        factor_cov=arr("factor_cov"),
        residuals=np.array([_decode(v) for v in doc["residuals"]]),
        mean_structure=bool(doc.get("mean_structure", False)),
        intercepts=None
        if "intercepts" not in doc
        else np.array([_decode(v) for v in doc["intercepts"]]),
        factor_means=None
        if "factor_means" not in doc
        else np.array([_decode(v) for v in doc["factor_means"]]),
    )


def dump_spec(spec: FactorModelSpec) -> str:
    return yaml.safe_dump(spec_to_dict(spec), sort_keys=False, default_flow_style=None)


def parse_spec(text: str) -> FactorModelSpec:
    return spec_from_dict(yaml.safe_load(text))
