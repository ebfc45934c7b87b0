import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from causalshap.attribution import cc_shapley_values
from causalshap.builtins import (BREAKFAST_K, analytic_breakfast_importance,
                                 analytic_breakfast_posterior, discrete_scm, signalling_graph)
from causalshap.data import Dataset
from causalshap.errors import ArgumentError, IngestError
from causalshap.estimators import EstimatorSpec
from causalshap.experiments import (Check, pearson, run_breakfast, run_diabetes_risk,
                                    run_discrete_pipeline, run_linear_sweep, sweep_checks,
                                    sweep_csv, synthetic_signalling_data, tolerance_scale)
from causalshap.graph import CausalGraph, target_path_profile
from causalshap.scm import sample


def read_all(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*"))
            if p.is_file()}


# closed form ---------------------------------------------------------------------

def test_analytic_posterior_pins():
    assert analytic_breakfast_posterior(BREAKFAST_K + 24.0, 60.0) == pytest.approx(0.5)
    assert analytic_breakfast_posterior(109 + 24.0, 60.0, rounded=True) == 0.5
    want = 1 / (1 + math.exp(-0.4 * (149 - 24 - (105 + 2.5 * math.log(17 / 3)))))
    assert analytic_breakfast_posterior(149, 60) == pytest.approx(want, rel=1e-15)
    assert analytic_breakfast_importance(149, 60) == pytest.approx(want - 0.15, rel=1e-15)
    out = analytic_breakfast_posterior(np.array([100.0, 200.0]), np.array([60.0, 60.0]))
    assert out.shape == (2,) and out[0] < out[1]


def test_check_lines_and_nan():
    assert Check("x", 0.01, 0.02, "<=").line() == "[PASS] x: 0.01 <= 0.02"
    assert not Check("x", float("nan"), 0.02, "<=").passed
    assert tolerance_scale(200_000) == 1.0 and tolerance_scale(50_000) == 2.0
    assert math.isnan(pearson([1.0], [2.0]))


# breakfast ------------------------------------------------------------------------

def test_breakfast_fast_mode_writes_outputs(tmp_path):
    rep = run_breakfast(n_fit=20_000, n_eval=500, out=tmp_path, render=True)
    names = set(read_all(tmp_path))
    assert {"attributions.csv", "contexts.csv", "plan.txt", "summary.txt",
            "shapley.svg", "cc-shapley.svg"} <= names
    assert rep.checks[0].name.startswith("SAP") and rep.checks[0].passed
    plan = (tmp_path / "plan.txt").read_text()
    assert "C\t{G}\t1/2\tshortcut-irrelevant-context" in plan
    assert "G\t{C}\t1/2\tshortcut-observation-equals-intervention" in plan


def test_breakfast_without_eval_rows(tmp_path):
    rep = run_breakfast(n_fit=10_000, n_eval=0, out=tmp_path)
    assert rep.cc.rows.n_rows == 0
    assert (tmp_path / "attributions.csv").read_text() == "row_id,feature,mode,phi,feature_value\n"


def test_breakfast_needs_enough_fit_rows():
    with pytest.raises(ArgumentError):
        run_breakfast(n_fit=5_000)


def test_breakfast_outputs_are_byte_stable(tmp_path):
    run_breakfast(n_fit=10_000, n_eval=300, seed=5, out=tmp_path / "a")
    run_breakfast(n_fit=10_000, n_eval=300, seed=5, out=tmp_path / "b")
    run_breakfast(n_fit=10_000, n_eval=300, seed=6, out=tmp_path / "c")
    assert read_all(tmp_path / "a") == read_all(tmp_path / "b")
    assert read_all(tmp_path / "a")["attributions.csv"] != read_all(tmp_path / "c")["attributions.csv"]


# diabetes risk ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def diabetes():
    return run_diabetes_risk(n_eval=3000)


def test_diabetes_plan_and_identities(diabetes):
    by_name = {c.name: c for c in diabetes.checks}
    for name in ("plan: contexts of B resolved as irrelevant", "phi_cc(B) - I_empty(B) (max abs)",
                 "I_do(B)(G) vs I_B(G): mean |diff|", "plan weights 1/3, 1/6, 1/6, 1/3 for B"):
        assert by_name[name].passed, by_name[name].line()
    assert np.array_equal(diabetes.cc.phi["B"], diabetes.cc.terms[("B", frozenset())])


def test_diabetes_grids_lose_collider_trough(diabetes):
    assert len(diabetes.grids) == 12
    xs, ks, obs = diabetes.grids["obs_B_given_G"]
    _, _, do = diabetes.grids["do_B_given_G"]
    assert obs.shape == do.shape == (40, 40)
    assert (obs < -0.3).mean() > 0.05
    assert (do < -0.3).mean() == 0.0


def test_diabetes_writes_grid_files(tmp_path):
    run_diabetes_risk(n_fit=20_000, n_eval=100, out=tmp_path, grid_size=5)
    grid = (tmp_path / "grids" / "obs_B_given_G.csv").read_text().splitlines()
    assert grid[0].startswith("G\\B,") and len(grid) == 6


def test_diabetes_sign_pattern_under_sd_reading():
    # negative relevance for B despite a positive univariate trend
    rep = run_diabetes_risk(n_eval=3000, semantics="sd")
    rows = rep.cc.rows
    assert pearson(rows["B"], rep.shapley.phi["B"]) < 0
    assert pearson(rows["B"], rep.cc.terms[("B", frozenset())]) > 0


# linear sweep --------------------------------------------------------------------------

def test_sweep_records_and_csv():
    recs = run_linear_sweep(n_scms=6, n_rows=5000, n_pool=20_000, n_jobs=2)
    assert len(recs) == 6
    assert all(math.isfinite(r.b_X1) for r in recs if not r.skipped)
    header = sweep_csv(recs).splitlines()[0].split(",")
    assert header[1:4] == ["b_X1", "b_X1_given_X2", "b_X1_do_X2"]
    assert recs == run_linear_sweep(n_scms=6, n_rows=5000, n_pool=20_000, n_jobs=1)


def test_sweep_without_edges():
    recs = run_linear_sweep(n_scms=3, edge_prob=0.0, n_rows=20_000, n_pool=20_000)
    for r in recs:
        assert r.collider_impact is None
        assert max(abs(r.b_X1), abs(r.b_X1_given_X2), abs(r.b_X1_do_X2)) < 0.03
    assert not sweep_checks(recs)[0].passed  # no high-impact records


def test_sweep_needs_instances():
    with pytest.raises(ArgumentError):
        run_linear_sweep(n_scms=0)


# discrete pipeline ------------------------------------------------------------------------

def test_discrete_pipeline_round_trip(tmp_path):
    truth, d = synthetic_signalling_data(6000, 1)
    path = tmp_path / "data.csv"
    d.to_csv(path)
    rep = run_discrete_pipeline(path, signalling_graph(), n_fit=5000, n_eval=400,
                                out=tmp_path / "out", context_rows=10)
    assert all(c.passed for c in rep.checks[:2])
    assert set(rep.univariate) == set(signalling_graph().features)
    files = read_all(tmp_path / "out")
    assert {"attributions.csv", "contexts.csv", "univariate.csv", "summary.txt"} <= set(files)
    assert len(files["contexts.csv"].decode().splitlines()) == 1 + 2 * 10 * 7 * 64


def test_discrete_pipeline_reports_missing_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("PKC,PKA\n0,1\n")
    with pytest.raises(IngestError, match="Akt"):
        run_discrete_pipeline(path, signalling_graph(), n_fit=100, n_eval=10)


def test_empty_intervention_column_uses_all_rows(tmp_path):
    m = discrete_scm(signalling_graph(), 0)
    d = sample(m, 3000, 0)
    text = d.to_csv().splitlines()
    path = tmp_path / "d.csv"
    path.write_text("\n".join([text[0] + ",INT"] + [ln + "," for ln in text[1:]]) + "\n")
    loaded = Dataset.from_csv(path)
    assert loaded.usable_for("PKC").all()
    rep = run_discrete_pipeline(loaded, signalling_graph(), n_fit=3000, n_eval=100)
    assert len(rep.model.mechanisms["PKC"].values) == 3000


def collider_free_graph():
    # A -> B -> Y -> E and F -> Y: every feature reaches Y without a collider
    return CausalGraph.from_edges([("A", "B"), ("B", "Y"), ("Y", "E"), ("F", "Y")], "Y")


@given(st.integers(0, 2**31))
@settings(max_examples=8)
def test_cc_sign_follows_univariate_trend_without_colliders(seed):
    g = collider_free_graph()
    assert all(target_path_profile(g, f)[1] == 0 for f in g.features)
    m = discrete_scm(g, seed)
    rows = sample(m, 3000, seed + 1)
    cc = cc_shapley_values(m, rows, EstimatorSpec("cpt"), 30_000, seed)
    for f in g.features:
        trend = pearson(rows[f], cc.terms[(f, frozenset())])
        if not abs(trend) > 0.2:
            continue
        assert np.sign(pearson(rows[f], cc.phi[f])) == np.sign(trend)
