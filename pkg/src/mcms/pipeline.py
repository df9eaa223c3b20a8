"""End-to-end analysis: ingest, descriptives, EFA, CFA, invariance, report.

A run is described by a YAML pipeline config::

    scale: builtin                # or a path to a scale file
    responses: [responses.csv]    # paths relative to the config file
    spam:
      test_items: {Test1: 2, Test2: 6, Test3: 4}
      attention_required: "Yes"
    groups: income                # countries | income | all
    pooled_exclude: [VEN]
    efa: false
    model:
      restricted: false
      use_scaled: true
      chisq_multiplier: n-1
      decision_mode: cfi-only
      max_freed: null
      reference_group: null
    out: results/

Every stage is computed in memory and the artifacts are written only once
all stages succeed, so a failing run leaves no partial output.
"""

from __future__ import annotations

import copy
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .descriptives import composite_correlations, composite_stats, cronbach_alpha
from .efa import ROUND_ONE, reduce_item_pool
from .ingest import (
    SpamRules,
    apply_spam_filter,
    compute_sample_moments,
    merge_groups,
    parse_responses,
    split_groups,
)
from .invariance import DECISION_MODES, run_invariance
from .published import INCOME_GROUPS
from .report import TABLES, dumps, render_report, to_plain, validate_document
from .scale import Attention, builtin_mcms, load_scale, scale_to_dict, validate_scale
from .sem import MCMS_RESTRICTED_PAIRS, compile_model, fit_model
from .sem.estimation import MULTIPLIERS

log = logging.getLogger(__name__)

GROUP_SETS = ("countries", "income", "all")
STAGES = ("ingest", "describe", "efa", "cfa", "invariance")
POOLED = "ALL"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3

DEFAULTS = {
    "scale": "builtin",
    "responses": [],
    "spam": {"test_items": {}, "attention_required": "Yes", "n_attention_options": 3},
    "groups": "all",
    "pooled_exclude": ["VEN"],
    "income_map": None,
    "efa": False,
    "model": {
        "restricted": False,
        "use_scaled": True,
        "chisq_multiplier": "n-1",
        "decision_mode": "cfi-only",
        "max_freed": None,
        "reference_group": None,
    },
    "out": "results",
}


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class PipelineConfig:
    """Resolved pipeline settings; ``base_dir`` anchors relative paths."""

    settings: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, doc, base_dir=None, overrides=None):
        unknown = set(doc or {}) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")
        settings = _merge(_merge(DEFAULTS, doc or {}), overrides or {})
        return cls(settings, Path(base_dir) if base_dir is not None else Path.cwd())

    @classmethod
    def load(cls, path, overrides=None):
        path = Path(path)
        try:
            doc = yaml.safe_load(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {path} is not valid YAML: {exc}") from None
        if doc is not None and not isinstance(doc, dict):
            raise ConfigError("config file must contain a mapping")
        return cls.from_dict(doc, path.parent, overrides)

    def path(self, value) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def model(self) -> dict:
        return self.settings["model"]

    @property
    def out_dir(self) -> Path:
        return self.path(self.settings["out"])

    def response_paths(self) -> list[Path]:
        files = self.settings["responses"]
        if isinstance(files, str):
            files = [files]
        return [self.path(f) for f in files]

    def scale(self):
        ref = self.settings["scale"]
        if ref in (None, "builtin", "mcms"):
            return builtin_mcms()
        return load_scale(self.path(ref))

    def spam_rules(self) -> SpamRules:
        s = self.settings["spam"]
        att = s.get("attention_required", "Yes")
        if att is True:
            att = "Yes"
        elif att is False:
            att = "No"
        return SpamRules(
            {str(k): int(v) for k, v in (s.get("test_items") or {}).items()},
            Attention.parse(str(att)),
            int(s.get("n_attention_options", 3)),
        )

    def validate(self):
        """Raise :class:`ConfigError` for anything checkable before running."""
        s = self.settings
        paths = self.response_paths()
        if not paths:
            raise ConfigError("no response files configured")
        missing = [str(p) for p in paths if not p.is_file()]
        if missing:
            raise ConfigError(f"response file not found: {', '.join(missing)}")
        try:
            scale = self.scale()
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"cannot load scale: {exc}") from None
        problems = validate_scale(scale)
        if problems:
            raise ConfigError("invalid scale: " + "; ".join(problems))
        try:
            rules = self.spam_rules()
            rules.check(scale.response_min, scale.response_max)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid spam rules: {exc}") from None
        if s["groups"] not in GROUP_SETS:
            raise ConfigError(f"groups must be one of {GROUP_SETS}, got {s['groups']!r}")
        m = self.model
        if m["decision_mode"] not in DECISION_MODES:
            raise ConfigError(f"decision_mode must be one of {DECISION_MODES}")
        if m["chisq_multiplier"] not in MULTIPLIERS:
            raise ConfigError(f"chisq_multiplier must be one of {MULTIPLIERS}")
        if not isinstance(m["use_scaled"], bool) or not isinstance(m["restricted"], bool):
            raise ConfigError("use_scaled and restricted must be true or false")
        if m["restricted"]:
            names = set(scale.factor_names)
            if any(a not in names or b not in names for a, b in MCMS_RESTRICTED_PAIRS):
                raise ConfigError("restricted model needs the MCMS factor names")
        return scale

    def resolved(self) -> dict:
        """Settings as embedded in the master document (output dir omitted)."""
        doc = copy.deepcopy(self.settings)
        doc.pop("out", None)
        files = self.settings["responses"]
        files = [files] if isinstance(files, str) else files
        doc["responses"] = [
            {"path": str(f), "sha256": hashlib.sha256(p.read_bytes()).hexdigest()}
            for f, p in zip(files, self.response_paths())
        ]
        return doc


@dataclass
class PipelineResult:
    status: int
    message: str = ""
    document: dict | None = None
    artifacts: dict = field(default_factory=dict)
    rejected: list = field(default_factory=list)


def _analysis_groups(cfg, matrices):
    """Map of analysis group -> response matrix for the configured selection."""
    exclude = set(cfg.settings["pooled_exclude"] or ())
    kept = {g: m for g, m in matrices.items() if g not in exclude}
    if not kept:
        raise ValueError("no respondents left after excluding " + ", ".join(sorted(exclude)))
    selection = cfg.settings["groups"]
    if selection == "all":
        return {}
    if selection == "countries":
        return kept
    mapping = cfg.settings["income_map"] or INCOME_GROUPS
    country_to = {c: inc for inc, cs in mapping.items() for c in cs}
    buckets = {}
    for g, m in kept.items():
        target = g if g in mapping else country_to.get(g)
        if target is None:
            raise ValueError(f"group {g} has no income-group assignment")
        buckets.setdefault(target, []).append(m)
    return {g: merge_groups(ms, g) for g, ms in sorted(buckets.items())}


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - any failure is reported with its stage
        raise StageError(name, exc) from exc


def _ingest(cfg, scale):
    rules = cfg.spam_rules()
    records, malformed = [], []
    for path in cfg.response_paths():
        records += parse_responses(path, scale, malformed)
    clean, spam, summary = apply_spam_filter(records, rules)
    rejected = [f"{r.respondent_id}\t{r.reason}" for r in malformed]
    rejected += [f"{r.respondent_id}\tfailed quality checks" for r in spam]
    section = summary.to_dict()
    section["n_malformed"] = len(malformed)
    section["random_pass_probability"] = rules.random_pass_probability(
        scale.response_max - scale.response_min + 1
    )
    return clean, section, rejected


def _describe(scale, groups):
    out = {}
    for g, m in groups.items():
        cs = composite_stats(m, scale).to_dict()
        alpha = {}
        for f in scale.factors:
            a = cronbach_alpha(m, f)
            alpha[f.name] = {"alpha": a.alpha, "ci_low": a.ci_low, "ci_high": a.ci_high,
                             "k": a.k, "n": a.n}
        out[g] = {"n": m.n, "composites": cs, "alpha": alpha}
    pooled = groups[POOLED]
    ct = composite_correlations(pooled, scale)
    corr = {"group": POOLED, "factors": list(ct.factors), "r": ct.r, "p_values": ct.p_values}
    return {"groups": out, "correlations": corr}


def _efa(scale, pooled):
    kept, removals = reduce_item_pool(pooled, scale, ROUND_ONE)
    return {
        "group": POOLED,
        "policy": {"min_loading": ROUND_ONE.min_loading,
                   "max_crossloading": ROUND_ONE.max_crossloading},
        "kept": list(kept),
        "removals": [
            {"iteration": r.iteration, "item": r.item, "reason": r.reason,
             "primary_loading": r.primary_loading, "max_crossloading": r.max_crossloading}
            for r in removals
        ],
    }


def _model_spec(cfg, scale):
    pairs = MCMS_RESTRICTED_PAIRS if cfg.model["restricted"] else ()
    return compile_model(scale, zero_covariances=pairs, mean_structure=True)


def _cfa(cfg, scale, moments):
    spec = _model_spec(cfg, scale)
    m = cfg.model
    groups, params, corrs = {}, {}, {}
    for g, mom in moments.items():
        fit = fit_model(spec, mom, multiplier=m["chisq_multiplier"],
                        use_scaled=m["use_scaled"])
        groups[g] = {
            "n": mom.n,
            "converged": fit.converged,
            "n_iter": fit.n_iter,
            "grad_norm": fit.grad_norm,
            "indices": fit.indices.to_dict(),
            "notes": list(fit.notes),
        }
        if g != POOLED:
            continue
        lam, _, theta, tau, _ = fit.matrices()
        rows = []
        for i, item in enumerate(spec.items):
            k = int(np.flatnonzero(spec.loadings[i] != 0)[0])
            factor = spec.factors[k]
            lab = f"lambda[{item},{factor}]"
            free = lab in fit.labels()
            rows.append({
                "item": item,
                "factor": factor,
                "loading": lam[i, k],
                "loading_se": fit.standard_error(lab) if free else None,
                "intercept": tau[i],
                "intercept_se": fit.standard_error(f"tau[{item}]"),
                "residual": theta[i],
            })
        params[g] = rows
        corrs[g] = {"factors": list(spec.factors), "r": fit.factor_correlations()}
    model = {"restricted": cfg.model["restricted"], "df": spec.df(), "n_free": spec.n_free(),
             "mean_structure": True, "chisq_multiplier": m["chisq_multiplier"],
             "use_scaled": m["use_scaled"]}
    return {"model": model, "groups": groups, "parameters": params, "factor_correlations": corrs}


def _invariance(cfg, scale, moments, selected):
    if len(selected) < 2:
        note = ("only one group configured" if cfg.settings["groups"] != "all"
                else "group selection 'all' has a single group")
        return {"note": note, "sets": {}}
    spec = _model_spec(cfg, scale)
    m = cfg.model
    rep = run_invariance(
        spec,
        [moments[g] for g in selected],
        mode=m["decision_mode"],
        max_freed=m["max_freed"],
        reference_group=m["reference_group"],
        multiplier=m["chisq_multiplier"],
        use_scaled=m["use_scaled"],
    )
    return {"note": None, "sets": {cfg.settings["groups"]: rep.to_dict()}}


def build_document(cfg: PipelineConfig, until: str = "invariance"):
    """Run the stages up to ``until`` and return ``(document, rejected lines)``."""
    scale = cfg.validate()
    clean, ingest_doc, rejected = _stage("ingest", _ingest, cfg, scale)
    doc = {
        "schema_version": "1.0",
        "tool": {"name": "mcms", "version": __version__},
        "config": cfg.resolved(),
        "scale": scale_to_dict(scale),
        "ingest": ingest_doc,
        "descriptives": {"groups": {}, "correlations": None},
        "efa": None,
        "cfa": {"model": {}, "groups": {}, "parameters": {}, "factor_correlations": {}},
        "invariance": {"note": "not run", "sets": {}},
    }
    stop = STAGES.index(until)
    if stop == 0:
        return to_plain(doc), rejected

    def groups_of():
        matrices = split_groups(clean, scale)
        selected = _analysis_groups(cfg, matrices)
        exclude = set(cfg.settings["pooled_exclude"] or ())
        pooled = merge_groups([m for g, m in matrices.items() if g not in exclude], POOLED)
        return {POOLED: pooled, **selected}, list(selected)

    groups, selected = _stage("describe", groups_of)
    doc["descriptives"] = _stage("describe", _describe, scale, groups)
    if stop >= STAGES.index("efa") and (cfg.settings["efa"] or until == "efa"):
        doc["efa"] = _stage("efa", _efa, scale, groups[POOLED])
    if stop >= STAGES.index("cfa"):
        moments = _stage("cfa", lambda: {g: compute_sample_moments(m) for g, m in groups.items()})
        doc["cfa"] = _stage("cfa", _cfa, cfg, scale, moments)
        if stop >= STAGES.index("invariance"):
            doc["invariance"] = _stage("invariance", _invariance, cfg, scale, moments, selected)
    doc = to_plain(doc)
    validate_document(doc)
    return doc, rejected


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    """Run every stage and write the master document, tables and rejection log.

    Artifacts: ``master.json``, one ``table_<name>.txt`` per table in
    :data:`mcms.report.TABLES`, and ``rejected.log``.
    """
    try:
        doc, rejected = build_document(cfg)
    except ConfigError as exc:
        return PipelineResult(EXIT_CONFIG, f"config error: {exc}")
    except StageError as exc:
        log.error("%s", exc)
        return PipelineResult(EXIT_STAGE, str(exc))
    tables = render_report(doc, "text")
    files = {"master.json": dumps(doc)}
    files.update({f"table_{name}.txt": tables[name] for name in TABLES})
    files["rejected.log"] = "".join(line + "\n" for line in rejected)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    artifacts = {}
    for name, text in files.items():
        (out / name).write_text(text, encoding="utf-8")
        artifacts[name] = out / name
    return PipelineResult(EXIT_OK, "ok", doc, artifacts, rejected)
