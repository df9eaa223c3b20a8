"""Synthetic response data from explicit factor-model parameters.

Genuine respondents follow ``y = tau + Lambda eta + eps`` with
``eta ~ (kappa, Phi)`` and ``eps ~ N(0, Theta)``. Spammers answer every
item, test item and the attention question uniformly at random.

Randomness comes from ``numpy.random.PCG64`` streams spawned from one
``SeedSequence``; each group draws from its own child stream.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import yaml

from . import published
from .ingest import write_responses
from .scale import Attention, ResponseMatrix, ResponseRecord, ScaleDefinition, builtin_mcms

RNG_ALGORITHM = "numpy.random.PCG64 via SeedSequence.spawn"
DEFAULT_TEST_ITEMS = {"Test1": 2, "Test2": 6, "Test3": 4}
ATTENTION_OPTIONS = (Attention.NO, Attention.YES, Attention.DONT_KNOW)
LATENT_DISTRIBUTIONS = ("normal", "t", "t-factors")


def _ro(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GroupParameters:
    loadings: np.ndarray
    factor_cov: np.ndarray
    residuals: np.ndarray
    intercepts: np.ndarray
    factor_means: np.ndarray
    n: int

    def __post_init__(self):
        for name in ("loadings", "factor_cov", "residuals", "intercepts", "factor_means"):
            object.__setattr__(self, name, _ro(getattr(self, name)))

    def __eq__(self, other):
        if not isinstance(other, GroupParameters):
            return NotImplemented
        return self.n == other.n and all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("loadings", "factor_cov", "residuals", "intercepts", "factor_means")
        )

    __hash__ = None

    def implied_cov(self) -> np.ndarray:
        lam = self.loadings
        return lam @ self.factor_cov @ lam.T + np.diag(self.residuals)

    def implied_mean(self) -> np.ndarray:
        return self.intercepts + self.loadings @ self.factor_means


@dataclass(frozen=True)
class GeneratorConfig:
    """Everything needed to regenerate a dataset bit for bit.

    ``mode`` is ``"continuous"`` or ``"likert"``; ``latent`` is
    ``"normal"``, ``"t"`` or ``"t-factors"``. With ``"t"`` the factor scores
    and residuals share one chi-square mixing variable, so the item vector
    is multivariate t; ``"t-factors"`` makes only the factor scores t. Both
    use ``latent_df`` degrees of freedom, rescaled so the factor covariance
    is still ``factor_cov``.
    """

    items: tuple[str, ...]
    factors: tuple[str, ...]
    groups: Mapping[str, GroupParameters]
    mode: str = "continuous"
    latent: str = "normal"
    latent_df: float = 5.0
    spam_fraction: float = 0.0
    seed: int = 0
    response_min: int = 1
    response_max: int = 7
    test_items: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_TEST_ITEMS))

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "factors", tuple(self.factors))
        object.__setattr__(self, "groups", dict(self.groups))

    def validate(self) -> list[str]:
        problems = []
        if self.mode not in ("continuous", "likert"):
            problems.append(f"unknown mode {self.mode!r}")
        if self.latent not in LATENT_DISTRIBUTIONS:
            problems.append(f"unknown latent distribution {self.latent!r}")
        if self.latent != "normal" and not self.latent_df > 2:
            problems.append("latent t distribution needs more than 2 degrees of freedom")
        if not 0 <= self.spam_fraction < 1:
            problems.append("spam_fraction must lie in [0, 1)")
        p, q = len(self.items), len(self.factors)
        for g, gp in self.groups.items():
            if gp.loadings.shape != (p, q):
                problems.append(f"group {g}: loadings must be {p}x{q}")
            phi = gp.factor_cov
            if phi.shape != (q, q) or not np.allclose(phi, phi.T):
                problems.append(f"group {g}: factor covariance must be symmetric {q}x{q}")
            elif np.linalg.eigvalsh(phi).min() < -1e-10:
                problems.append(f"group {g}: factor covariance is not positive semidefinite")
            if (gp.residuals < 0).any():
                problems.append(f"group {g}: residual variances must be nonnegative")
            if gp.n < 1:
                problems.append(f"group {g}: n must be positive")
        return problems


def mcms_parameters(n: int, residual: float = 0.5) -> GroupParameters:
    """Published loadings, intercepts and factor correlations, completed with
    unit factor variances, residual variances ``residual`` and zero means."""
    items = builtin_mcms().items
    return GroupParameters(
        loadings=published.loading_matrix(items),
        factor_cov=published.factor_correlations(),
        residuals=np.full(len(items), residual),
        intercepts=published.intercepts(items),
        factor_means=np.zeros(len(published.FACTOR_ORDER)),
        n=n,
    )


def mcms_config(n=1000, groups=("ALL",), seed=0, **kwargs) -> GeneratorConfig:
    scale = builtin_mcms()
    params = mcms_parameters(n)
    return GeneratorConfig(
        items=scale.items,
        factors=scale.factor_names,
        groups={g: params for g in groups},
        seed=seed,
        **kwargs,
    )


def _slot(cfg: GeneratorConfig, label: str):
    """(field name, index) of a slot label such as ``tau[Am3]``."""
    matrix, rest = label.split("[", 1)
    names = rest.rstrip("]").split(",")
    if matrix == "lambda":
        return "loadings", (cfg.items.index(names[0]), cfg.factors.index(names[1]))
    if matrix == "phi":
        return "factor_cov", (cfg.factors.index(names[0]), cfg.factors.index(names[1]))
    if matrix == "theta":
        return "residuals", (cfg.items.index(names[0]),)
    if matrix == "tau":
        return "intercepts", (cfg.items.index(names[0]),)
    if matrix == "kappa":
        return "factor_means", (cfg.factors.index(names[0]),)
    raise KeyError(label)


def plant_noninvariance(cfg: GeneratorConfig, edits) -> GeneratorConfig:
    """Add ``delta`` to a parameter slot of one group, for each (group, slot, delta)."""
    groups = dict(cfg.groups)
    for group, label, delta in edits:
        if group not in groups:
            raise KeyError(f"unknown group {group}")
        name, idx = _slot(cfg, label)
        gp = groups[group]
        values = np.array(getattr(gp, name))
        values[idx] += delta
        if name == "factor_cov" and len(idx) == 2 and idx[0] != idx[1]:
            values[idx[::-1]] += delta
        groups[group] = dataclasses.replace(gp, **{name: values})
    return dataclasses.replace(cfg, groups=groups)


@dataclass(frozen=True)
class SimulatedData:
    matrices: Mapping[str, ResponseMatrix]
    is_spam: Mapping[str, np.ndarray]
    test_answers: Mapping[str, np.ndarray]
    attention: Mapping[str, tuple]
    test_items: Mapping[str, int]
    seed: int
    rng_algorithm: str = RNG_ALGORITHM

    def genuine(self, group: str) -> ResponseMatrix:
        m = self.matrices[group]
        return ResponseMatrix(m.items, m.rows[~self.is_spam[group]], group)

    def records(self) -> list[ResponseRecord]:
        out = []
        codes = list(self.test_items)
        for g, m in self.matrices.items():
            for i, row in enumerate(m.rows):
                out.append(
                    ResponseRecord(
                        respondent_id=f"{g}-{i + 1:06d}",
                        group=g,
                        item_answers={
                            item: (int(v) if float(v).is_integer() else float(v))
                            for item, v in zip(m.items, row)
                        },
                        test_item_answers={
                            c: int(v) for c, v in zip(codes, self.test_answers[g][i])
                        },
                        attention_answer=self.attention[g][i],
                    )
                )
        return out

    def write(self, scale: ScaleDefinition, dest=None) -> str:
        return write_responses(self.records(), scale, dest)


def _draw(rng, gp: GroupParameters, n, p, latent, latent_df):
    """Factor scores and residuals, optionally with a t mixing variable.

    The mixing variable is scaled by ``(df - 2) / chi2_df`` so that the
    covariances stay ``factor_cov`` and ``diag(residuals)``.
    """
    q = gp.factor_cov.shape[0]
    z = rng.multivariate_normal(np.zeros(q), gp.factor_cov, size=n, method="eigh")
    eps = rng.standard_normal((n, p)) * np.sqrt(gp.residuals)
    if latent != "normal":
        w = np.sqrt((latent_df - 2.0) / rng.chisquare(latent_df, size=n))[:, None]
        z = z * w
        if latent == "t":
            eps = eps * w
    return gp.factor_means + z, eps


def simulate_responses(cfg: GeneratorConfig) -> SimulatedData:
    """Draw one response matrix per group, spammers included.

    In ``likert`` mode answers are ``round(clip(y, min, max))``; the number
    of spammers per group is ``round(spam_fraction * n)``.
    """
    problems = cfg.validate()
    if problems:
        raise ValueError("; ".join(problems))
    lo, hi = cfg.response_min, cfg.response_max
    children = np.random.SeedSequence(cfg.seed).spawn(len(cfg.groups))
    matrices, spam, tests, attention = {}, {}, {}, {}
    codes = list(cfg.test_items)
    expected = np.array([cfg.test_items[c] for c in codes], dtype=int)
    for (g, gp), child in zip(cfg.groups.items(), children):
        rng = np.random.Generator(np.random.PCG64(child))
        n = gp.n
        eta, eps = _draw(rng, gp, n, len(cfg.items), cfg.latent, cfg.latent_df)
        y = gp.intercepts + eta @ gp.loadings.T + eps
        if cfg.mode == "likert":
            y = np.floor(np.clip(y, lo, hi) + 0.5).astype(int)
        n_spam = int(round(cfg.spam_fraction * n))
        is_spam = np.zeros(n, dtype=bool)
        is_spam[rng.permutation(n)[:n_spam]] = True
        test = np.tile(expected, (n, 1))
        att = np.full(n, 1)
        if n_spam:
            noise = rng.integers(lo, hi + 1, size=(n_spam, len(cfg.items)))
            if cfg.mode == "likert":
                y[is_spam] = noise
            else:
                y[is_spam] = noise.astype(float)
            test[is_spam] = rng.integers(lo, hi + 1, size=(n_spam, len(codes)))
            att[is_spam] = rng.integers(0, len(ATTENTION_OPTIONS), size=n_spam)
        is_spam.setflags(write=False)
        test.setflags(write=False)
        matrices[g] = ResponseMatrix(cfg.items, y, g)
        spam[g] = is_spam
        tests[g] = test
        attention[g] = tuple(ATTENTION_OPTIONS[k] for k in att)
    return SimulatedData(matrices, spam, tests, attention, dict(cfg.test_items), cfg.seed)


def config_to_dict(cfg: GeneratorConfig) -> dict:
    return {
        "items": list(cfg.items),
        "factors": list(cfg.factors),
        "mode": cfg.mode,
        "latent": cfg.latent,
        "latent_df": float(cfg.latent_df),
        "spam_fraction": float(cfg.spam_fraction),
        "seed": int(cfg.seed),
        "response_min": int(cfg.response_min),
        "response_max": int(cfg.response_max),
        "test_items": {k: int(v) for k, v in cfg.test_items.items()},
        "groups": {
            g: {
                "n": int(gp.n),
                "loadings": gp.loadings.tolist(),
                "factor_cov": gp.factor_cov.tolist(),
                "residuals": gp.residuals.tolist(),
                "intercepts": gp.intercepts.tolist(),
                "factor_means": gp.factor_means.tolist(),
            }
            for g, gp in cfg.groups.items()
        },
    }


def config_from_dict(doc) -> GeneratorConfig:
    """Build a config; a group may give ``defaults: mcms`` to start from the
    published parameters and override individual fields."""
    groups = {}
    for g, gd in doc["groups"].items():
        gd = dict(gd)
        if gd.pop("defaults", None) == "mcms":
            base = mcms_parameters(int(gd.get("n", 1000)), float(gd.pop("residual", 0.5)))
            fields = {k: gd[k] for k in gd if k != "n"}
            groups[g] = dataclasses.replace(base, n=int(gd.get("n", base.n)), **fields)
        else:
            groups[g] = GroupParameters(
                loadings=gd["loadings"],
                factor_cov=gd["factor_cov"],
                residuals=gd["residuals"],
                intercepts=gd["intercepts"],
                factor_means=gd["factor_means"],
                n=int(gd["n"]),
            )
    scale = builtin_mcms()
    return GeneratorConfig(
        items=tuple(doc.get("items", scale.items)),
        factors=tuple(doc.get("factors", scale.factor_names)),
        groups=groups,
        mode=doc.get("mode", "continuous"),
        latent=doc.get("latent", "normal"),
        latent_df=float(doc.get("latent_df", 5.0)),
        spam_fraction=float(doc.get("spam_fraction", 0.0)),
        seed=int(doc.get("seed", 0)),
        response_min=int(doc.get("response_min", 1)),
        response_max=int(doc.get("response_max", 7)),
        test_items=dict(doc.get("test_items", DEFAULT_TEST_ITEMS)),
    )


def dump_config(cfg: GeneratorConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=None)


def load_config(path) -> GeneratorConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(yaml.safe_load(fh))
