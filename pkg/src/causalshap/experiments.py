"""Reproducible experiment runners.

Each runner returns a report object holding the computed quantities and a
list of named checks, and can write its outputs to a directory.
"""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attribution import (AttributionResult, InterventionalFits, Mode, cc_shapley_values,
                          context_label, sap_check, shapley_values)
from .builtins import (analytic_breakfast_importance, breakfast, diabetes_risk, discrete_scm,
                       linear_sweep_instance, signalling_graph)
from .data import Dataset
from .errors import ArgumentError, FitError
from .estimators import BinnedModel, EstimatorSpec, fit
from .graph import CausalGraph, collider_impact
from .scm import NoiseSpec, Scm, fit_scm_from_data, intervene_atomic, sample
from .seeding import DEFAULT_SEED, derive_int

DENSE_MIN = 50
REFERENCE_N_FIT = 200_000


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    threshold: float
    relation: str  # "<=", ">=", "<", ">"
    detail: str = ""

    @property
    def passed(self) -> bool:
        v, t = self.value, self.threshold
        if v is None or (isinstance(v, float) and math.isnan(v)):
            return False
        return {"<=": v <= t, ">=": v >= t, "<": v < t, ">": v > t}[self.relation]

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"[{status}] {self.name}: {self.value:.6g} {self.relation} {self.threshold:g}{extra}"


def tolerance_scale(n_fit: int) -> float:
    """Monte-Carlo tolerances grow as 1/sqrt(n) below the reference fit size."""
    return max(1.0, math.sqrt(REFERENCE_N_FIT / max(n_fit, 1)))


def dense_mask(models, d: Dataset, min_count: int = DENSE_MIN) -> np.ndarray:
    """Rows whose cell holds at least ``min_count`` training points in every binned model."""
    mask = np.ones(d.n_rows, dtype=bool)
    for m in models:
        if isinstance(m, BinnedModel):
            mask &= m.count_at(d.matrix(m.inputs)) >= min_count
    return mask


def pearson(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    if len(x) < 2 or x.std() == 0 or y.std() == 0:
        return float("nan")
    return float(np.corrcoef(x, y)[0, 1])


def _mean_abs(x) -> float:
    return float(np.mean(np.abs(x))) if len(x) else 0.0


def _max_abs(x) -> float:
    return float(np.max(np.abs(x))) if len(x) else 0.0


def _write_results(out: Path, results: list[AttributionResult], context_rows: int | None,
                   render: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    attr = [r.attributions_csv() for r in results]
    ctx = [r.contexts_csv(max_rows=context_rows) for r in results]
    with open(out / "attributions.csv", "w", newline="") as fh:
        fh.write(attr[0] + "".join(a.split("\n", 1)[1] for a in attr[1:]))
    with open(out / "contexts.csv", "w", newline="") as fh:
        fh.write(_prefix_method(results, ctx))
    with open(out / "plan.txt", "w") as fh:
        for r in results:
            fh.write(f"# {r.method}\n{r.plan_text()}")
    if render:
        from .render import beeswarm_svg
        for r in results:
            (out / f"{r.method}.svg").write_text(beeswarm_svg(r))


def _prefix_method(results, ctx) -> str:
    lines = ["method," + ctx[0].split("\n", 1)[0]]
    for r, text in zip(results, ctx):
        body = text.split("\n", 1)[1]
        lines.extend(f"{r.method},{ln}" for ln in body.split("\n") if ln)
    return "\n".join(lines) + "\n"


def _write_summary(out: Path, header: str, checks: list[Check], extra: str = "") -> str:
    text = header + "\n" + "".join(c.line() + "\n" for c in checks) + extra
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.txt").write_text(text)
    return text


def _grid_csv(path: Path, xs, ys, values, xname: str, yname: str) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"{yname}\\{xname}"] + [repr(float(x)) for x in xs])
    for j, y in enumerate(ys):
        w.writerow([repr(float(y))] + [repr(float(v)) for v in values[j]])
    path.write_text(buf.getvalue())


# Breakfast ------------------------------------------------------------------

@dataclass
class BreakfastReport:
    shapley: AttributionResult
    cc: AttributionResult
    checks: list[Check]
    analytic_max_error: float
    fits: InterventionalFits = field(repr=False)

    def summary(self) -> str:
        return "".join(c.line() + "\n" for c in self.checks)


def breakfast_analytic_error(fits: InterventionalFits, min_count: int = DENSE_MIN) -> float:
    """Max |fitted I_C(G) - closed form| over cell centres with enough data."""
    obs = fits.fits(())
    joint = obs.model({"C", "G"})
    marg = obs.model({"C"})
    if not isinstance(joint, BinnedModel):
        raise ArgumentError("the analytic check needs a binned estimator")
    ci, gi = joint.inputs.index("C"), joint.inputs.index("G")
    cc, gc = np.meshgrid(joint.centers(ci), joint.centers(gi), indexing="ij")
    pts = np.empty((cc.size, 2))
    pts[:, ci], pts[:, gi] = cc.ravel(), gc.ravel()
    keep = joint.count_at(pts) >= min_count
    if not keep.any():
        return float("nan")
    fitted = joint.predict_matrix(pts) - marg.predict_matrix(pts[:, [ci]])
    analytic = analytic_breakfast_importance(pts[:, gi], pts[:, ci])
    return float(np.max(np.abs(fitted - analytic)[keep]))


def run_breakfast(n_fit: int = REFERENCE_N_FIT, n_eval: int = 10_000, seed: int = DEFAULT_SEED,
                  spec: EstimatorSpec | None = None, semantics: str = "variance",
                  out: str | os.PathLike | None = None, render: bool = False) -> BreakfastReport:
    if n_fit < 10_000:
        raise ArgumentError("n_fit must be >= 10000")
    spec = spec or EstimatorSpec("binned")
    m = breakfast(semantics)
    fits = InterventionalFits(m, spec, n_fit, seed)
    eval_rows = sample(m, n_eval, derive_int(seed, "eval"))
    shap = shapley_values(fits.data(()), eval_rows, spec, target="Y")
    cc = cc_shapley_values(m, eval_rows, spec, n_fit, seed, fits=fits)
    scale = tolerance_scale(n_fit)

    checks = [Check("SAP: mean |phi_cc(C)|", _mean_abs(cc.phi["C"]), 0.02 * scale, "<="),
              Check("suppressor: corr(C, phi(C))", pearson(eval_rows["C"], shap.phi["C"]),
                    -0.5, "<=")]
    high = eval_rows["C"] > 70
    checks.append(Check("observational attribution: mean |phi(C)| where C > 70",
                        _mean_abs(shap.phi["C"][high]), 0.03, ">", f"{int(high.sum())} rows"))
    err = breakfast_analytic_error(fits) if spec.kind == "binned" else float("nan")
    checks.append(Check("closed-form I_C(G): max error on dense cells", err, 0.05 * scale, "<="))
    for name, do_pair, ref in (
            ("I_do(C)(G) vs I_C(G)", fits.interventional_pair("G", {"C"}),
             fits.observational_pair("G", {"C"})),
            ("I_do(G)(C) vs I_empty(C)", fits.interventional_pair("C", {"G"}),
             fits.observational_pair("C", ()))):
        mask = dense_mask([do_pair.model_with, do_pair.model_without,
                           ref.model_with, ref.model_without], eval_rows)
        diff = (do_pair.evaluate(eval_rows) - ref.evaluate(eval_rows))[mask]
        checks.append(Check(f"{name}: max pointwise |diff| on dense rows", _max_abs(diff),
                            0.03 * scale, "<=", f"{int(mask.sum())} rows"))
    report = BreakfastReport(shap, cc, checks, err, fits)
    if out is not None:
        out = Path(out)
        _write_results(out, [shap, cc], None, render)
        _write_summary(out, f"breakfast: n_fit={n_fit} n_eval={n_eval} seed={seed} "
                            f"estimator={spec} noise={semantics}", checks)
    return report


# Diabetes risk -----------------------------------------------------------------

@dataclass
class DiabetesReport:
    shapley: AttributionResult
    cc: AttributionResult
    checks: list[Check]
    grids: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]
    fits: InterventionalFits = field(repr=False)


def _quantile_axis(x: np.ndarray, n: int = 40) -> np.ndarray:
    lo, hi = np.quantile(x, [0.005, 0.995])
    edges = np.linspace(lo, hi, n + 1)
    return 0.5 * (edges[:-1] + edges[1:])


def importance_grid(pair, xj: str, k: str, xs: np.ndarray, ks: np.ndarray) -> np.ndarray:
    """I evaluated on the (k, xj) grid; rows index k, columns index xj."""
    kk, xx = np.meshgrid(ks, xs, indexing="ij")
    d = Dataset({xj: xx.ravel(), k: kk.ravel()})
    return pair.evaluate(d).reshape(len(ks), len(xs))


def run_diabetes_risk(n_fit: int = REFERENCE_N_FIT, n_eval: int = 10_000,
                      seed: int = DEFAULT_SEED, spec: EstimatorSpec | None = None,
                      semantics: str = "variance", out: str | os.PathLike | None = None,
                      render: bool = False, grid_size: int = 40) -> DiabetesReport:
    spec = spec or EstimatorSpec("binned")
    m = diabetes_risk(semantics)
    fits = InterventionalFits(m, spec, n_fit, seed)
    eval_rows = sample(m, n_eval, derive_int(seed, "eval"))
    shap = shapley_values(fits.data(()), eval_rows, spec, target="Y")
    cc = cc_shapley_values(m, eval_rows, spec, n_fit, seed, fits=fits)
    scale = tolerance_scale(n_fit)
    checks = []

    contexts_b = [s for s in cc.contexts_of("B") if s]
    lemma1 = sum(cc.pairs[("B", s)].mode is Mode.SHORTCUT_LEMMA1 for s in contexts_b)
    checks.append(Check("plan: contexts of B resolved as irrelevant", lemma1, 3, ">="))
    base = cc.terms[("B", frozenset())]
    checks.append(Check("phi_cc(B) - I_empty(B) (max abs)", _max_abs(cc.phi["B"] - base),
                        1e-12, "<="))
    for s in contexts_b:
        do_pair = fits.interventional_pair("B", s)
        diff = do_pair.evaluate(eval_rows) - base
        checks.append(Check(f"I_do({','.join(sorted(s))})(B) vs I_empty(B): mean |diff|",
                            _mean_abs(diff), 0.03 * scale, "<="))
    do_pair = fits.interventional_pair("G", {"B"})
    diff = do_pair.evaluate(eval_rows) - fits.observational_pair("G", {"B"}).evaluate(eval_rows)
    checks.append(Check("I_do(B)(G) vs I_B(G): mean |diff|", _mean_abs(diff), 0.03 * scale, "<="))
    checks.append(Check("corr(B, phi(B))", pearson(eval_rows["B"], shap.phi["B"]), 0.0, "<"))
    checks.append(Check("corr(B, I_empty(B))", pearson(eval_rows["B"], base), 0.0, ">"))
    wanted = {"1/3", "1/6"}
    seen = {str(cc.weights[("B", s)].exact) for s in cc.contexts_of("B")}
    checks.append(Check("plan weights 1/3, 1/6, 1/6, 1/3 for B", float(wanted <= seen), 1, ">="))

    grids = {}
    feats = m.features
    axes = {f: _quantile_axis(fits.data(())[f], grid_size) for f in feats}
    for xj in feats:
        for k in feats:
            if k == xj:
                continue
            for label, pair in (("obs", fits.observational_pair(xj, {k})),
                                ("do", fits.interventional_pair(xj, {k}))):
                grids[f"{label}_{xj}_given_{k}"] = (
                    axes[xj], axes[k], importance_grid(pair, xj, k, axes[xj], axes[k]))
    report = DiabetesReport(shap, cc, checks, grids, fits)
    if out is not None:
        out = Path(out)
        _write_results(out, [shap, cc], None, render)
        (out / "grids").mkdir(parents=True, exist_ok=True)
        for name, (xs, ks, vals) in grids.items():
            xj, k = name.split("_")[1], name.split("_")[3]
            _grid_csv(out / "grids" / f"{name}.csv", xs, ks, vals, xj, k)
        _write_summary(out, f"diabetes-risk: n_fit={n_fit} n_eval={n_eval} seed={seed} "
                            f"estimator={spec} noise={semantics}", checks)
    return report


# Linear sweep ---------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRecord:
    scm_seed: int
    b_X1: float
    b_X1_given_X2: float
    b_X1_do_X2: float
    collider_impact: float | None
    skipped: str = ""

    @property
    def do_gap(self) -> float:
        return abs(self.b_X1_do_X2 - self.b_X1) / (1 + abs(self.b_X1))

    @property
    def obs_gap(self) -> float:
        return abs(self.b_X1_given_X2 - self.b_X1) / (1 + abs(self.b_X1))


def sweep_instance(index: int, seed: int, n_vars: int, edge_prob: float, n_rows: int,
                   noise: NoiseSpec, n_pool: int) -> SweepRecord:
    scm_seed = derive_int(seed, "scm", index)
    m, wg = linear_sweep_instance(scm_seed, n_vars, edge_prob, noise)
    impact = collider_impact(wg, "X1", "X2", "Y")
    spec = EstimatorSpec("linear")
    try:
        d = sample(m, n_rows, derive_int(seed, "data", index))
        b1 = fit(spec, d, ["X1"], "Y").coef["X1"]
        b12 = fit(spec, d, ["X1", "X2"], "Y").coef["X1"]
        fits = InterventionalFits(m, spec, n_rows, derive_int(seed, "do", index), n_pool)
        bdo = fits.interventional_pair("X1", {"X2"}).model_with.coef["X1"]
    except FitError as exc:
        nan = float("nan")
        return SweepRecord(scm_seed, nan, nan, nan, impact, str(exc))
    return SweepRecord(scm_seed, b1, b12, bdo, impact)


def run_linear_sweep(n_scms: int = 200, n_vars: int = 9, edge_prob: float = 0.8,
                     n_rows: int = 30_000, seed: int = DEFAULT_SEED,
                     noise: NoiseSpec | None = None, n_pool: int = 100_000, n_jobs: int = 1,
                     out: str | os.PathLike | None = None) -> list[SweepRecord]:
    if n_scms < 1:
        raise ArgumentError("n_scms must be >= 1")
    noise = noise or NoiseSpec.laplace(0.0, 0.1)

    def one(i):
        return sweep_instance(i, seed, n_vars, edge_prob, n_rows, noise, n_pool)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            records = list(ex.map(one, range(n_scms)))
    else:
        records = [one(i) for i in range(n_scms)]
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.csv").write_text(sweep_csv(records))
        _write_summary(out, f"linear-sweep: n_scms={n_scms} n_vars={n_vars} p={edge_prob} "
                            f"n_rows={n_rows} noise={noise} seed={seed}", sweep_checks(records))
    return records


def sweep_csv(records: list[SweepRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scm_seed", "b_X1", "b_X1_given_X2", "b_X1_do_X2", "collider_impact", "skipped"])
    for r in records:
        w.writerow([r.scm_seed, repr(r.b_X1), repr(r.b_X1_given_X2), repr(r.b_X1_do_X2),
                    "" if r.collider_impact is None else repr(r.collider_impact), r.skipped])
    return buf.getvalue()


def sweep_checks(records: list[SweepRecord], threshold: float = 0.9) -> list[Check]:
    high = [r for r in records if not r.skipped and r.collider_impact is not None
            and r.collider_impact > threshold]
    if not high:
        return [Check("high-impact records", 0, 1, ">=")]
    do_gaps = np.array([r.do_gap for r in high])
    obs_gaps = np.array([r.obs_gap for r in high])
    return [
        Check("high-impact records", len(high), 1, ">="),
        Check("share of high-impact records with do-gap <= 0.05", float(np.mean(do_gaps <= 0.05)),
              0.9, ">="),
        Check("median do-gap minus median observational gap",
              float(np.median(do_gaps) - np.median(obs_gaps)), 0.0, "<",
              f"medians {np.median(do_gaps):.4g} vs {np.median(obs_gaps):.4g}"),
        Check("median do-gap", float(np.median(do_gaps)), 0.05, "<="),
    ]


# Discrete pipeline ---------------------------------------------------------------

@dataclass
class DiscreteReport:
    model: Scm
    shapley: AttributionResult
    cc: AttributionResult
    univariate: dict[str, dict[float, float]]
    checks: list[Check]


def synthetic_signalling_data(n: int, seed: int, decoys: bool = False,
                              interventional_share: float = 0.2) -> tuple[Scm, Dataset]:
    """Rows from a known discrete model; a share of them come from atomic
    interventions on a random non-target node, named in the INT column."""
    g = signalling_graph(decoys)
    truth = discrete_scm(g, derive_int(seed, "truth"))
    n_int = int(round(n * interventional_share))
    parts = [sample(truth, n - n_int, derive_int(seed, "observational"))]
    labels = [np.array([""] * (n - n_int), dtype=object)]
    nodes = [x for x in g.nodes if x != g.target]
    per = n_int // len(nodes) if nodes else 0
    for i, node in enumerate(nodes):
        size = per if i < len(nodes) - 1 else n_int - per * (len(nodes) - 1)
        if size <= 0:
            continue
        level = float(i % 3)
        parts.append(sample(intervene_atomic(truth, {node: level}), size,
                            derive_int(seed, "interventional", node)))
        labels.append(np.array([node] * size, dtype=object))
    cols = {k: np.concatenate([p[k] for p in parts]) for k in g.nodes}
    return truth, Dataset(cols, np.concatenate(labels))


def univariate_table(result: AttributionResult) -> dict[str, dict[float, float]]:
    """Mean I_empty per feature and observed level."""
    out = {}
    for f in result.features:
        term = result.terms[(f, frozenset())]
        x = result.rows[f]
        out[f] = {float(v): float(term[x == v].mean()) for v in np.unique(x)}
    return out


def run_discrete_pipeline(data: str | os.PathLike | Dataset, graph: CausalGraph,
                          n_fit: int = 50_000, n_eval: int = 10_000, seed: int = DEFAULT_SEED,
                          out: str | os.PathLike | None = None, render: bool = False,
                          context_rows: int | None = 200, n_jobs: int = 1,
                          sap_tolerance: float = 0.03) -> DiscreteReport:
    """Fit a discrete SCM from (partly interventional) data, then attribute the target."""
    d = data if isinstance(data, Dataset) else Dataset.from_csv(data, required=graph.nodes)
    d.require(graph.nodes)
    model = fit_scm_from_data(graph, d, discrete=graph.nodes)
    spec = EstimatorSpec("cpt")
    fits = InterventionalFits(model, spec, n_fit, seed)
    eval_rows = sample(model, n_eval, derive_int(seed, "eval"))
    shap = shapley_values(fits.data(()), eval_rows, spec, target=graph.target,
                          features=graph.features)
    cc = cc_shapley_values(model, eval_rows, spec, n_fit, seed, fits=fits, n_jobs=n_jobs)
    uni = univariate_table(cc)
    sap = sap_check(cc, graph, sap_tolerance)
    checks = [Check("fitted mechanisms", len(model.mechanisms), len(graph.nodes), ">="),
              Check("recomposition error", max(shap.recomposition_error(),
                                               cc.recomposition_error()), 1e-12, "<=")]
    for e in sap.entries:
        checks.append(Check(f"SAP: mean |phi_cc({e.feature})|", e.mean_abs_phi, sap_tolerance, "<="))
    report = DiscreteReport(model, shap, cc, uni, checks)
    if out is not None:
        out = Path(out)
        _write_results(out, [shap, cc], context_rows, render)
        lines = ["feature,level,mean_I_empty"]
        for f, table in uni.items():
            lines.extend(f"{f},{lvl!r},{v!r}" for lvl, v in table.items())
        (out / "univariate.csv").write_text("\n".join(lines) + "\n")
        _write_summary(out, f"discrete: rows={d.n_rows} n_fit={n_fit} n_eval={n_eval} "
                            f"seed={seed} target={graph.target}", checks, str(sap) + "\n")
    return report
