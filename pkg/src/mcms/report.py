"""Master report document and its rendered tables.

The master document is plain JSON: sorted keys, NaN written as null, no
timestamps, so identical inputs give identical bytes. Rendered tables are
pure functions of the document.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import jsonschema
import numpy as np

SCHEMA_VERSION = "1.0"
FORMATS = ("text", "markdown", "latex")
TABLES = ("ingest", "descriptives", "cfa_fit", "parameters", "factor_correlations", "invariance")

_num = {"type": ["number", "null"]}
_obj = {"type": "object"}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "tool", "config", "scale", "ingest", "descriptives", "cfa",
                 "invariance"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "tool": {
            "type": "object",
            "required": ["name", "version"],
            "properties": {"name": {"type": "string"}, "version": {"type": "string"}},
        },
        "config": _obj,
        "scale": {
            "type": "object",
            "required": ["name", "factors"],
            "properties": {
                "factors": {
                    "type": "array",
                    "items": {"type": "object", "required": ["name", "items", "marker"]},
                }
            },
        },
        "ingest": {
            "type": "object",
            "required": ["n_raw", "n_clean", "spam_rate", "per_group"],
            "properties": {
                "n_raw": {"type": "integer", "minimum": 0},
                "n_clean": {"type": "integer", "minimum": 0},
                "spam_rate": _num,
                "per_group": {
                    "type": "object",
                    "additionalProperties": {
                        "type": "object",
                        "required": ["n_raw", "n_clean", "spam_rate"],
                    },
                },
            },
        },
        "descriptives": {
            "type": "object",
            "required": ["groups"],
            "properties": {
                "groups": {
                    "type": "object",
                    "additionalProperties": {
                        "type": "object",
                        "required": ["n", "composites", "alpha"],
                    },
                },
                "correlations": {"type": ["object", "null"]},
            },
        },
        "cfa": {
            "type": "object",
            "required": ["model", "groups", "parameters", "factor_correlations"],
            "properties": {
                "groups": {
                    "type": "object",
                    "additionalProperties": {
                        "type": "object",
                        "required": ["n", "converged", "indices"],
                        "properties": {
                            "indices": {
                                "type": "object",
                                "required": ["chisq", "df", "cfi", "tli", "rmsea", "rmsea_ci90",
                                             "srmr"],
                                "properties": {
                                    "rmsea_ci90": {
                                        "type": "array", "items": _num, "minItems": 2,
                                        "maxItems": 2,
                                    },
                                },
                            }
                        },
                    },
                },
                "parameters": _obj,
                "factor_correlations": _obj,
            },
        },
        "efa": {"type": ["object", "null"]},
        "invariance": {
            "type": "object",
            "required": ["sets", "note"],
            "properties": {
                "note": {"type": ["string", "null"]},
                "sets": {
                    "type": "object",
                    "additionalProperties": {
                        "type": "object",
                        "required": ["groups", "levels", "freed_intercepts", "decision_mode"],
                        "properties": {
                            "levels": {
                                "type": "array",
                                "items": {
                                    "type": "object",
                                    "required": ["level", "cfi", "rmsea", "cfi_delta",
                                                 "rmsea_delta", "decision"],
                                },
                            }
                        },
                    },
                },
            },
        },
    },
}


class ReportSchemaError(ValueError):
    pass


def to_plain(obj):
    """Recursively convert numpy scalars/arrays to Python and NaN/inf to None."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def validate_document(doc) -> None:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise ReportSchemaError(f"report schema violation at '{path}': {exc.message}") from None


def dumps(doc) -> str:
    return json.dumps(to_plain(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_document(doc, path) -> None:
    Path(path).write_text(dumps(doc), encoding="utf-8")


def load_document(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


# ---- rendering -------------------------------------------------------------


def _f(x, digits):
    if x is None:
        return "-"
    return f"{x:.{digits}f}"


def _ci(pair, digits, fmt):
    lo, hi = (_f(v, digits) for v in pair)
    if fmt == "latex":
        return f"{lo} \\; {hi}"
    return f"{lo}; {hi}"


def _escape(s, fmt):
    s = str(s)
    if fmt == "latex":
        for a, b in (("\\", "\\textbackslash{}"), ("&", "\\&"), ("%", "\\%"), ("_", "\\_"),
                     ("#", "\\#")):
            s = s.replace(a, b)
    return s


def _table(title, headers, rows, fmt):
    rows = [[str(c) for c in r] for r in rows]
    if fmt == "markdown":
        out = [f"### {title}", "", "| " + " | ".join(headers) + " |",
               "|" + "|".join("---" for _ in headers) + "|"]
        out += ["| " + " | ".join(r) + " |" for r in rows]
        return "\n".join(out) + "\n"
    if fmt == "latex":
        cols = "l" + "r" * (len(headers) - 1)
        out = [f"% {title}", f"\\begin{{tabular}}{{{cols}}}", "\\hline",
               " & ".join(_escape(h, fmt) for h in headers) + " \\\\", "\\hline"]
        out += [" & ".join(_escape(c, fmt) if "\\;" not in c else c for c in r) + " \\\\"
                for r in rows]
        out += ["\\hline", "\\end{tabular}"]
        return "\n".join(out) + "\n"
    widths = [max(len(h), *(len(r[k]) for r in rows)) if rows else len(h)
              for k, h in enumerate(headers)]
    line = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
    out = [title, "=" * len(title), line, "-" * len(line)]
    out += ["  ".join(c.ljust(w) if k == 0 else c.rjust(w) for k, (c, w) in
                      enumerate(zip(r, widths))) for r in rows]
    return "\n".join(out) + "\n"


def _ingest_table(doc, fmt):
    ing = doc["ingest"]
    rows = [[g, t["n_raw"], f"{100 * t['spam_rate']:.0f} %", t["n_clean"]]
            for g, t in ing["per_group"].items()]
    rows.append(["Total", ing["n_raw"], f"{100 * ing['spam_rate']:.0f} %", ing["n_clean"]])
    return _table("Sample sizes before and after spam removal",
                  ["Group", "N raw", "Spam", "N clean"], rows, fmt)


def _abbrev(doc):
    """Factor name -> short column label (its marker code without digits)."""
    out = {}
    for f in doc["scale"]["factors"]:
        code = f["marker"].rstrip("0123456789")
        out[f["name"]] = code or f["name"]
    return out


def _descriptive_tables(doc, fmt):
    factors = [f["name"] for f in doc["scale"]["factors"]]
    short = _abbrev(doc)
    groups = doc["descriptives"]["groups"]
    heads = ["Group"] + [short[f] for f in factors]
    rows = []
    for g, d in groups.items():
        rows.append([g] + [
            f"{_f(d['composites'][f]['mean'], 2)} ({_f(d['composites'][f]['sd'], 2)})"
            for f in factors
        ])
    parts = [_table("Composite means (SD)", heads, rows, fmt)]
    rows = []
    for g, d in groups.items():
        rows.append([g] + [
            f"{_f(d['alpha'][f]['alpha'], 2)} [{_f(d['alpha'][f]['ci_low'], 2)}, "
            f"{_f(d['alpha'][f]['ci_high'], 2)}]"
            for f in factors
        ])
    parts.append(_table("Cronbach's alpha [95% CI]", heads, rows, fmt))
    corr = doc["descriptives"].get("correlations")
    if corr:
        r = corr["r"]
        rows = [[short[f]] + [_f(r[i][j], 2) if j < i else "" for j in range(len(factors) - 1)]
                for i, f in enumerate(factors) if i > 0]
        parts.append(_table(f"Composite correlations ({corr['group']})",
                            [""] + [short[f] for f in factors[:-1]], rows, fmt))
    return "\n".join(parts)


def _fit_table(doc, fmt):
    rows = []
    for g, d in doc["cfa"]["groups"].items():
        ix = d["indices"]
        chisq = ix["chisq_sb"] if ix.get("scaled") else ix["chisq"]
        rows.append([g, d["n"], _f(chisq, 2), ix["df"], _f(ix["cfi"], 3), _f(ix["tli"], 3),
                     _f(ix["rmsea"], 3), _ci(ix["rmsea_ci90"], 3, fmt), _f(ix["srmr"], 3)])
    scaled = any(d["indices"].get("scaled") for d in doc["cfa"]["groups"].values())
    stat = "S-B chi2" if scaled else "chi2"
    return _table("CFA goodness of fit", ["Group", "N", stat, "df", "CFI", "TLI", "RMSEA",
                                          "RMSEA 90% CI", "SRMR"], rows, fmt)


def _parameter_table(doc, fmt):
    short = _abbrev(doc)
    parts = []
    for g, params in doc["cfa"]["parameters"].items():
        rows = [[p["item"], short[p["factor"]], _f(p["loading"], 3), _f(p["intercept"], 3)]
                for p in params]
        parts.append(_table(f"Loadings and intercepts ({g})",
                            ["Item", "Factor", "lambda", "tau"], rows, fmt))
    return "\n".join(parts)


def _factor_corr_table(doc, fmt):
    short = _abbrev(doc)
    parts = []
    for g, d in doc["cfa"]["factor_correlations"].items():
        factors, r = d["factors"], d["r"]
        rows = [[short[f]] + [_f(r[i][j], 3) if j < i else "" for j in range(len(factors) - 1)]
                for i, f in enumerate(factors) if i > 0]
        parts.append(_table(f"Estimated factor correlations ({g})",
                            [""] + [short[f] for f in factors[:-1]], rows, fmt))
    return "\n".join(parts)


_LEVEL_NAMES = {
    "configural": "Configural invariance",
    "metric": "Metric invariance",
    "full_scalar": "Full scalar invariance",
    "partial_scalar": "Partial scalar invariance",
}


def _invariance_table(doc, fmt):
    inv = doc["invariance"]
    if not inv["sets"]:
        note = inv.get("note") or "no invariance tests were run"
        return f"Measurement invariance\n(section omitted: {note})\n"
    parts = []
    for name, s in inv["sets"].items():
        rows = []
        for r in s["levels"]:
            label = _LEVEL_NAMES[r["level"]]
            if r["level"] == "partial_scalar":
                label += f" ({len(s['freed_intercepts'])} free)"
            rows.append([label, _f(r["cfi"], 3), _f(r["cfi_delta"], 3), _f(r["rmsea"], 3),
                         _f(r["rmsea_delta"], 3), r["decision"] or "-"])
        title = f"Measurement invariance: {name} ({', '.join(s['groups'])})"
        text = _table(title, ["Level", "CFI", "CFI delta", "RMSEA", "RMSEA delta", "Decision"],
                      rows, fmt)
        freed = ", ".join(s["freed_intercepts"]) or "none"
        text += f"Freed intercepts: {_escape(freed, fmt)}\n"
        parts.append(text)
    return "\n".join(parts)


_RENDERERS = {
    "ingest": _ingest_table,
    "descriptives": _descriptive_tables,
    "cfa_fit": _fit_table,
    "parameters": _parameter_table,
    "factor_correlations": _factor_corr_table,
    "invariance": _invariance_table,
}


def render_report(doc, fmt: str = "text") -> dict[str, str]:
    """Render every table of a schema-valid master document.

    Returns ``{table name: rendered text}`` in :data:`TABLES` order.
    Indices and deltas use 3 decimals, alpha, means and SDs 2.
    """
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    validate_document(doc)
    return {name: _RENDERERS[name](doc, fmt) for name in TABLES}


def render_text(doc, fmt: str = "text") -> str:
    return "\n".join(render_report(doc, fmt).values())
