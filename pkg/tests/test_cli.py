import subprocess
import sys
import xml.etree.ElementTree as ET

import pytest

from causalshap.cli import main

CYCLE = """
target: A
nodes:
  - name: A
    parents: [B]
    mechanism: B + U
    noise: normal(0, 1)
  - name: B
    parents: [A]
    mechanism: A
"""

LOG_NEGATIVE = """
target: Y
nodes:
  - name: X
    mechanism: exogenous normal(0, 1)
  - name: Y
    parents: [X]
    mechanism: log(X)
"""


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_graph_check_breakfast(capsys):
    code, out, _ = run(capsys, "graph-check", "--builtin", "breakfast")
    assert code == 0
    assert "topological order: C Y G" in out
    assert "C: suppressor (all target paths pass a collider)" in out


def test_graph_check_diabetes_lemma_matrix(capsys):
    _, out, _ = run(capsys, "graph-check", "--builtin", "diabetes-risk")
    for ctx in ("{G}", "{H}", "{G,H}"):
        assert f"B; {ctx}: lemma1=yes" in out
    assert "G; {H}: lemma1=no lemma2=no" in out


def test_cycle_is_an_input_error(capsys, tmp_path):
    p = tmp_path / "cycle.yaml"
    p.write_text(CYCLE)
    code, _, err = run(capsys, "graph-check", "--scm", str(p))
    assert code == 2
    assert "cycle detected:" in err and "A" in err and "B" in err


def test_missing_file_and_missing_model(capsys, tmp_path):
    assert run(capsys, "graph-check", "--scm", str(tmp_path / "nope.yaml"))[0] == 2
    assert run(capsys, "sample")[0] == 2


def test_unknown_experiment_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["experiment", "nonsense"])
    assert exc.value.code == 2


def test_computation_failure_exit_code(capsys, tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text(LOG_NEGATIVE)
    code, _, err = run(capsys, "sample", "--scm", str(p), "--out", str(tmp_path / "o"))
    assert code == 1
    assert "node 'Y'" in err


def test_sample_writes_csv(capsys, tmp_path):
    code, _, _ = run(capsys, "sample", "--builtin", "breakfast", "-n", "5", "--out", str(tmp_path))
    assert code == 0
    lines = (tmp_path / "samples.csv").read_text().splitlines()
    assert lines[0] == "C,Y,G" and len(lines) == 6


def attribute(capsys, out, *extra):
    return run(capsys, "attribute", "--builtin", "breakfast", "--n-fit", "20000",
               "--n-eval", "50", "--out", str(out), *extra)


def test_attribute_both_methods(capsys, tmp_path):
    code, _, _ = attribute(capsys, tmp_path, "--method", "both", "--render")
    assert code == 0
    rows = (tmp_path / "attributions.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 50 * 2
    assert {r.split(",")[2] for r in rows[1:]} == {"shapley", "cc-shapley"}
    ctx = (tmp_path / "contexts.csv").read_text().splitlines()
    assert ctx[0] == "method,row_id,feature,context,mode,weight,importance"
    svg = ET.parse(tmp_path / "cc-shapley.svg").getroot()
    circles = [e for e in svg.iter() if e.tag.endswith("circle")]
    assert len(circles) == 50 * 2


def test_attribute_headers_only(capsys, tmp_path):
    code, _, _ = run(capsys, "attribute", "--builtin", "breakfast", "--n-fit", "20000",
                     "--n-eval", "0", "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "attributions.csv").read_text() == "row_id,feature,mode,phi,feature_value\n"
    assert (tmp_path / "contexts.csv").read_text().count("\n") == 1


def test_attribute_rerun_is_byte_identical(capsys, tmp_path):
    attribute(capsys, tmp_path / "a")
    attribute(capsys, tmp_path / "b")
    for name in ("attributions.csv", "contexts.csv", "plan.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_attribute_with_csv_data(capsys, tmp_path):
    run(capsys, "sample", "--builtin", "breakfast", "-n", "20000", "--out", str(tmp_path / "s"))
    code, _, _ = attribute(capsys, tmp_path / "o", "--method", "shapley",
                           "--data", str(tmp_path / "s" / "samples.csv"))
    assert code == 0
    rows = (tmp_path / "o" / "attributions.csv").read_text().splitlines()
    assert len(rows) == 1 + 50 * 2


def test_config_precedence(capsys, tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("n_eval: 7\nn-fit: 20000\nmethod: shapley\n")
    run(capsys, "attribute", "--builtin", "breakfast", "--config", str(cfg), "--out", str(tmp_path / "a"))
    assert (tmp_path / "a" / "attributions.csv").read_text().count("\n") == 1 + 7 * 2
    run(capsys, "attribute", "--builtin", "breakfast", "--config", str(cfg), "--n-eval", "3",
        "--out", str(tmp_path / "b"))
    assert (tmp_path / "b" / "attributions.csv").read_text().count("\n") == 1 + 3 * 2


def test_output_root_from_environment(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("CAUSALSHAP_OUT", str(tmp_path))
    run(capsys, "sample", "--builtin", "binary-product", "-n", "3")
    assert (tmp_path / "sample" / "samples.csv").exists()


def test_experiment_linear_sweep(capsys, tmp_path):
    code, out, _ = run(capsys, "experiment", "linear-sweep", "--n-scms", "4", "--n-rows", "3000",
                       "--out", str(tmp_path))
    assert code == 0
    header = (tmp_path / "sweep.csv").read_text().splitlines()[0]
    assert header.startswith("scm_seed,b_X1,b_X1_given_X2,b_X1_do_X2,collider_impact")
    assert "high-impact records" in out


def test_experiment_breakfast_fast_mode(capsys, tmp_path):
    code, out, _ = run(capsys, "experiment", "breakfast", "--n-fit", "10000", "--n-eval", "500",
                       "--out", str(tmp_path))
    assert code == 0
    lines = [ln for ln in out.splitlines() if ln.startswith("[")]
    assert len(lines) == 6 and lines[0].startswith("[PASS] SAP")
    assert (tmp_path / "summary.txt").exists()


def test_experiment_discrete(capsys, tmp_path):
    code, out, _ = run(capsys, "experiment", "discrete", "--graph", "signalling", "--n-rows", "4000",
                       "--n-fit", "4000", "--n-eval", "200", "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "data.csv").exists() and (tmp_path / "univariate.csv").exists()
    assert "[PASS] recomposition error" in out


def test_console_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "causalshap.cli", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert "Precedence: flags > --config file > defaults" in res.stdout
