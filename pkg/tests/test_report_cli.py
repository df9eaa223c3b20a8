import copy
import json

import numpy as np
import pytest
import yaml

from mcms.cli import main
from mcms.pipeline import EXIT_CONFIG, EXIT_STAGE, PipelineConfig, run_pipeline
from mcms.report import (
    TABLES,
    ReportSchemaError,
    dumps,
    load_document,
    render_report,
    validate_document,
)
from mcms.scale import builtin_mcms
from mcms.simulate import dump_config, mcms_config, simulate_responses


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    cfg = mcms_config(300, groups=("USA", "BRA", "IND"), seed=3, mode="likert",
                      spam_fraction=0.2)
    simulate_responses(cfg).write(builtin_mcms(), root / "responses.csv")
    settings = {"responses": ["responses.csv"], "spam": {"test_items": dict(cfg.test_items)},
                "groups": "countries", "out": "results"}
    (root / "run.yaml").write_text(yaml.safe_dump(settings))
    (root / "sim.yaml").write_text(dump_config(cfg))
    return root


@pytest.fixture(scope="module")
def document(workdir):
    result = run_pipeline(PipelineConfig.load(workdir / "run.yaml"))
    assert result.status == 0, result.message
    return result.document


def test_artifacts_written(workdir, document):
    out = workdir / "results"
    names = {p.name for p in out.iterdir()}
    assert names == {"master.json", "rejected.log"} | {f"table_{t}.txt" for t in TABLES}
    assert load_document(out / "master.json") == document
    n_rejected = len((out / "rejected.log").read_text().splitlines())
    assert n_rejected == document["ingest"]["n_raw"] - document["ingest"]["n_clean"]


def test_document_validates(document):
    validate_document(document)
    assert set(document["cfa"]["groups"]) == {"ALL", "USA", "BRA", "IND"}
    assert list(document["invariance"]["sets"])


def test_index_rounding(document):
    doc = copy.deepcopy(document)
    doc["cfa"]["groups"]["USA"]["indices"]["cfi"] = 0.96489
    doc["cfa"]["groups"]["USA"]["indices"]["rmsea_ci90"] = [0.0412, 0.05049]
    text = render_report(doc, "text")["cfa_fit"]
    assert "0.965" in text and "0.96489" not in text
    assert "0.041; 0.050" in text


def test_latex_and_markdown(document):
    latex = render_report(document, "latex")
    assert "\\begin{tabular}" in latex["cfa_fit"] and " \\; " in latex["cfa_fit"]
    md = render_report(document, "markdown")
    assert md["cfa_fit"].startswith("### ")
    with pytest.raises(ValueError):
        render_report(document, "html")


def test_invariance_section_omitted(document):
    doc = copy.deepcopy(document)
    doc["invariance"]["sets"] = {}
    doc["invariance"]["note"] = "only one group selected"
    assert "section omitted: only one group selected" in render_report(doc)["invariance"]


def test_schema_violation(document):
    doc = copy.deepcopy(document)
    del doc["ingest"]
    with pytest.raises(ReportSchemaError, match="ingest"):
        validate_document(doc)
    doc = copy.deepcopy(document)
    doc["schema_version"] = "0.1"
    with pytest.raises(ReportSchemaError):
        render_report(doc)


def test_dumps_nan_as_null():
    text = dumps({"b": np.float64("nan"), "a": np.arange(2)})
    assert json.loads(text) == {"a": [0, 1], "b": None}
    assert text.index('"a"') < text.index('"b"')


def test_missing_response_file(tmp_path):
    (tmp_path / "run.yaml").write_text(yaml.safe_dump({"responses": ["nope.csv"],
                                                       "out": "results"}))
    assert main(["pipeline", "--config", str(tmp_path / "run.yaml")]) == EXIT_CONFIG
    assert not (tmp_path / "results").exists()


def test_unknown_config_field(tmp_path):
    (tmp_path / "run.yaml").write_text("responses: [a.csv]\ncolour: blue\n")
    assert main(["pipeline", "--config", str(tmp_path / "run.yaml")]) == EXIT_CONFIG


def test_stage_failure_leaves_no_output(tmp_path):
    (tmp_path / "bad.csv").write_text("respondent_id,group,Am1\nr1,USA,3\n")
    (tmp_path / "run.yaml").write_text(yaml.safe_dump(
        {"responses": ["bad.csv"], "spam": {"test_items": {"Test1": 2}}, "out": "results"}))
    assert main(["pipeline", "--config", str(tmp_path / "run.yaml")]) == EXIT_STAGE
    assert not (tmp_path / "results").exists()


def test_cli_simulate_is_reproducible(workdir, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["simulate", "--config", str(workdir / "sim.yaml"), "--out", str(a)]) == 0
    assert main(["simulate", "--config", str(workdir / "sim.yaml"), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() == (workdir / "responses.csv").read_bytes()
    c = tmp_path / "c.csv"
    main(["simulate", "--config", str(workdir / "sim.yaml"), "--seed", "4", "--out", str(c)])
    assert c.read_bytes() != a.read_bytes()


def test_cli_pipeline_overrides(workdir, tmp_path, capsys):
    out = tmp_path / "cli"
    code = main(["pipeline", "--config", str(workdir / "run.yaml"), "--out", str(out),
                 "--decision-mode", "conjunctive", "--restricted", "true"])
    assert code == 0
    doc = load_document(out / "master.json")
    assert doc["config"]["model"]["decision_mode"] == "conjunctive"
    assert doc["cfa"]["groups"]["ALL"]["indices"]["df"] == 122
    assert "master.json" in capsys.readouterr().out


def test_cli_stage_and_report(workdir, document, tmp_path, capsys):
    dest = tmp_path / "describe.json"
    assert main(["describe", "--config", str(workdir / "run.yaml"), "--out", str(dest)]) == 0
    section = json.loads(dest.read_text())
    assert section["descriptives"] == document["descriptives"]
    master = workdir / "results" / "master.json"
    assert main(["report", str(master), "--format", "markdown"]) == 0
    assert "| Group |" in capsys.readouterr().out
