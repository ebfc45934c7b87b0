import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from causalshap.data import Dataset
from causalshap.errors import ArgumentError, FitError, UnknownNodeError
from causalshap.estimators import (BinnedModel, ConstantModel, CptModel, EstimatorSpec,
                                   LinearModel, fit, unique_rows)


def product_table():
    # Y = X1 * X2 over the four equally likely configurations
    x1, x2 = np.array([0, 0, 1, 1.0]), np.array([0, 1, 0, 1.0])
    return Dataset({"X1": x1, "X2": x2, "Y": x1 * x2})


def test_spec_parse_and_str():
    assert EstimatorSpec.parse("binned:40") == EstimatorSpec("binned", bins=40)
    assert EstimatorSpec.parse("linear:1e-6").ridge == 1e-6
    assert str(EstimatorSpec.parse("cpt")) == "cpt"
    for bad in ("tree", "binned:1"):
        with pytest.raises((ArgumentError, ValueError)):
            EstimatorSpec.parse(bad)
    with pytest.raises(ArgumentError):
        EstimatorSpec("linear", ridge=-1)


def test_cpt_on_product_gives_half_x2():
    m = fit(EstimatorSpec("cpt"), product_table(), ["X2"], "Y")
    assert isinstance(m, CptModel)
    assert m.predict({"X2": 1.0}) == 0.5 and m.predict({"X2": 0.0}) == 0.0


def test_empty_inputs_give_constant():
    m = fit(EstimatorSpec("binned"), product_table(), [], "Y")
    assert isinstance(m, ConstantModel) and m.predict({}) == 0.25


def test_unseen_configuration_falls_back_to_mean():
    d = Dataset({"X": np.array([0.0, 0.0, 1.0]), "Y": np.array([1.0, 3.0, 8.0])})
    m = fit(EstimatorSpec("cpt"), d, ["X"], "Y")
    assert m.predict({"X": 5.0}) == pytest.approx(4.0)


def test_linear_slope():
    rng = np.random.default_rng(1)
    x = rng.normal(size=20_000)
    d = Dataset({"X": x, "Y": 1.0 + 2.0 * x + rng.normal(scale=0.5, size=x.size)})
    m = fit(EstimatorSpec("linear"), d, ["X"], "Y")
    assert isinstance(m, LinearModel)
    assert m.coef["X"] == pytest.approx(2.0, abs=0.02)


def test_ridge_limit_matches_least_squares():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(500, 3))
    y = X @ [1.0, -2.0, 0.5] + 3.0 + rng.normal(size=500)
    d = Dataset({"A": X[:, 0], "B": X[:, 1], "C": X[:, 2], "Y": y})
    beta = np.linalg.lstsq(np.column_stack([np.ones(500), X]), y, rcond=None)[0]
    m = fit(EstimatorSpec("linear", ridge=1e-12), d, ["A", "B", "C"], "Y")
    assert np.allclose([m.intercept, *m.coefficients], beta, atol=1e-8)


def test_singular_design_needs_ridge():
    x = np.arange(10.0)
    d = Dataset({"A": x, "B": 2 * x, "Y": x})
    with pytest.raises(FitError):
        fit(EstimatorSpec("linear"), d, ["A", "B"], "Y")
    fit(EstimatorSpec("linear", ridge=1e-8), d, ["A", "B"], "Y")


def test_missing_inputs():
    m = fit(EstimatorSpec("cpt"), product_table(), ["X1", "X2"], "Y")
    with pytest.raises(ArgumentError):
        m.predict({"X1": 1.0})
    with pytest.raises(UnknownNodeError):
        fit(EstimatorSpec("cpt"), product_table(), ["Q"], "Y")
    with pytest.raises(ArgumentError):
        fit(EstimatorSpec("cpt"), product_table(), ["Y"], "Y")


def test_no_rows_is_a_fit_error():
    d = product_table()
    with pytest.raises(FitError):
        fit(EstimatorSpec("cpt"), d, ["X1"], "Y", rows=np.zeros(4, dtype=bool))


def test_binned_clamps_out_of_range_queries():
    x = np.linspace(0, 1, 1000)
    d = Dataset({"X": x, "Y": (x > 0.5).astype(float)})
    m = fit(EstimatorSpec("binned", bins=10), d, ["X"], "Y")
    assert isinstance(m, BinnedModel)
    assert m.predict({"X": -5.0}) == 0.0 and m.predict({"X": 7.0}) == 1.0
    assert m.count_at(np.array([[0.05]]))[0] == 100


def test_binary_target_predictions_are_probabilities():
    rng = np.random.default_rng(3)
    x = rng.normal(size=5000)
    y = (rng.random(5000) < 1 / (1 + np.exp(-x))).astype(float)
    d = Dataset({"X": x, "Y": y})
    for spec in (EstimatorSpec("binned"), EstimatorSpec("cpt")):
        p = fit(spec, d, ["X"], "Y").predict_dataset(d)
        assert p.min() >= 0 and p.max() <= 1


def test_summary_lists_inputs_and_rows():
    text = fit(EstimatorSpec("cpt"), product_table(), ["X1", "X2"], "Y").summary()
    assert "inputs: X1, X2" in text and "training rows: 4" in text


@given(arrays(np.int8, st.tuples(st.integers(1, 60), st.integers(1, 3)), elements=st.integers(0, 3)),
       arrays(np.float64, 60, elements=st.floats(-10, 10)))
def test_cpt_matches_group_by(X, yfull):
    y = yfull[:len(X)]
    names = [f"V{j}" for j in range(X.shape[1])]
    d = Dataset({**{n: X[:, j] for j, n in enumerate(names)}, "Y": y})
    m = fit(EstimatorSpec("cpt"), d, names, "Y")
    groups = {}
    for row, v in zip(map(tuple, X.astype(float).tolist()), y):
        groups.setdefault(row, []).append(v)
    for row, vals in groups.items():
        assert m.predict(dict(zip(names, row))) == pytest.approx(np.mean(vals), abs=1e-9)


@given(arrays(np.float64, st.tuples(st.integers(0, 50), st.integers(0, 3)),
              elements=st.sampled_from([-1.5, 0.0, 2.0, 7.25])))
def test_unique_rows_matches_numpy(X):
    configs, inverse = unique_rows(X)
    assert np.array_equal(configs[inverse], X) or X.shape[1] == 0
    if X.shape[1] and len(X):
        ref = np.unique(X, axis=0)
        assert sorted(map(tuple, configs.tolist())) == sorted(map(tuple, ref.tolist()))


def test_binned_mean_matches_cell_average():
    pts = np.array(list(itertools.product([0.1, 0.9], [0.1, 0.9])) * 3)
    y = np.arange(len(pts), dtype=float)
    d = Dataset({"A": pts[:, 0], "B": pts[:, 1], "Y": y})
    m = fit(EstimatorSpec("binned", bins=2), d, ["A", "B"], "Y")
    assert m.predict({"A": 0.1, "B": 0.9}) == pytest.approx(np.mean(y[1::4]))
