"""Command-line interface.

Settings are resolved as: command-line flags, then the YAML file given by
--config (keys named like the flags, e.g. ``n_fit: 50000``), then defaults.
Output goes to --out, else to $CAUSALSHAP_OUT/<command>, else to
./causalshap-out/<command>.

Exit codes: 0 success, 1 computation failure, 2 bad input.
"""
from __future__ import annotations

import argparse
import itertools
import os
import sys
from pathlib import Path

import yaml

from . import builtins as bi
from .attribution import cc_shapley_values, context_label, shapley_values
from .data import Dataset
from .errors import (ArgumentError, CausalShapError, CycleError, ExpressionError, IngestError,
                     PreconditionError, UnknownNodeError)
from .estimators import EstimatorSpec
from .experiments import (run_breakfast, run_diabetes_risk, run_discrete_pipeline,
                          run_linear_sweep, sweep_checks, synthetic_signalling_data)
from .graph import lemma1_applies, lemma2_applies, target_path_profile
from .scm import Scm, sample
from .scmfile import load_scm
from .seeding import DEFAULT_SEED, derive_int

OUT_ENV = "CAUSALSHAP_OUT"
SIGNALLING_GRAPHS = ("signalling", "signalling+decoys")
INPUT_ERRORS = (IngestError, ExpressionError, CycleError, UnknownNodeError, ArgumentError,
                PreconditionError, FileNotFoundError, yaml.YAMLError)

DEFAULTS = {
    "seed": DEFAULT_SEED,
    "n_eval": 10_000,
    "n_scms": 200,
    "n_jobs": 1,
    "method": "both",
    "estimator": None,
    "render": False,
    "graph": "signalling",
    "context_rows": 200,
}


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="causalshap",
        description="Structural causal models and (causal-context) Shapley attribution.",
        epilog="Precedence: flags > --config file > defaults. "
               f"Default seed {DEFAULT_SEED}. Output root: --out, else ${OUT_ENV}, "
               "else ./causalshap-out.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=True):
        if model:
            g = sp.add_mutually_exclusive_group()
            g.add_argument("--scm", help="SCM declaration file (YAML)")
            g.add_argument("--builtin", choices=sorted(bi.BUILTINS), help="built-in SCM")
        sp.add_argument("--seed", type=int, help=f"master seed (default {DEFAULT_SEED})")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--config", help="YAML file with default settings")

    sp = sub.add_parser("graph-check", help="validate an SCM and print structural diagnostics")
    common(sp)
    sp = sub.add_parser("sample", help="draw rows from an SCM into samples.csv")
    common(sp)
    sp.add_argument("-n", "--n-rows", type=int, dest="n_rows")
    sp = sub.add_parser("attribute", help="Shapley and/or cc-Shapley values for an SCM")
    common(sp)
    sp.add_argument("--method", choices=["shapley", "cc-shapley", "both"])
    sp.add_argument("--n-fit", type=int, dest="n_fit")
    sp.add_argument("--n-eval", type=int, dest="n_eval")
    sp.add_argument("--estimator", help="binned[:bins] | linear[:ridge] | cpt")
    sp.add_argument("--data", help="observational CSV used for the Shapley fits")
    sp.add_argument("--render", action="store_true", default=None, help="write beeswarm SVGs")
    sp.add_argument("--n-jobs", type=int, dest="n_jobs")
    sp = sub.add_parser("experiment", help="run a built-in experiment")
    common(sp, model=False)
    sp.add_argument("name", choices=["breakfast", "diabetes-risk", "linear-sweep", "discrete"])
    sp.add_argument("--n-fit", type=int, dest="n_fit")
    sp.add_argument("--n-eval", type=int, dest="n_eval")
    sp.add_argument("--n-scms", type=int, dest="n_scms")
    sp.add_argument("--n-rows", type=int, dest="n_rows",
                    help="rows per SCM (linear-sweep) or synthetic rows (discrete)")
    sp.add_argument("--estimator", help="binned[:bins] | linear[:ridge] | cpt")
    sp.add_argument("--data", help="discrete: CSV with node columns and optional INT column")
    sp.add_argument("--graph", help="discrete: 'signalling', 'signalling+decoys' or an SCM file")
    sp.add_argument("--context-rows", type=int, dest="context_rows",
                    help="discrete: rows written to contexts.csv")
    sp.add_argument("--render", action="store_true", default=None, help="write beeswarm SVGs")
    sp.add_argument("--n-jobs", type=int, dest="n_jobs")
    return p


def _settings(args: argparse.Namespace) -> dict:
    cfg = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise IngestError(f"{args.config}: expected a mapping")
        cfg = {str(k).replace("-", "_"): v for k, v in loaded.items()}
    merged = dict(DEFAULTS)
    merged.update(cfg)
    merged.update({k: v for k, v in vars(args).items() if v is not None})
    return merged


def _int(s: dict, key: str, default: int) -> int:
    """Per-command default for settings whose sensible value differs by command."""
    v = s.get(key)
    return default if v is None else int(v)


def _out_dir(s: dict, name: str) -> Path:
    if s.get("out"):
        return Path(s["out"])
    return Path(os.environ.get(OUT_ENV) or "causalshap-out") / name


def _model(s: dict) -> Scm:
    if s.get("scm"):
        return load_scm(s["scm"])
    if s.get("builtin"):
        return bi.builtin(s["builtin"])
    raise UsageError("one of --scm or --builtin is required")


def diagnose(m: Scm) -> str:
    g = m.graph
    lines = ["topological order: " + " ".join(g.topological_order()), "", "features:"]
    for f in g.features:
        n, with_collider = target_path_profile(g, f)
        if n == 0:
            verdict = "disconnected from the target"
        elif with_collider == n:
            verdict = "suppressor (all target paths pass a collider)"
        else:
            verdict = f"{n - with_collider} of {n} target paths are collider-free"
        lines.append(f"{f}: {verdict}")
    lines += ["", "context shortcuts (feature; context: irrelevant-context, observation=intervention):"]
    feats = g.features
    for f in feats:
        others = [x for x in feats if x != f]
        for r in range(1, len(others) + 1):
            for s in itertools.combinations(others, r):
                l1 = lemma1_applies(g, f, s)
                l2 = lemma2_applies(g, f, s)
                lines.append(f"{f}; {context_label(s)}: "
                             f"lemma1={'yes' if l1 else 'no'} lemma2={'yes' if l2 else 'no'}")
    return "\n".join(lines) + "\n"


def cmd_graph_check(s: dict) -> int:
    m = _model(s)
    sys.stdout.write(diagnose(m))
    return 0


def cmd_sample(s: dict) -> int:
    m = _model(s)
    d = sample(m, _int(s, "n_rows", 10_000), int(s["seed"]))
    out = _out_dir(s, "sample")
    out.mkdir(parents=True, exist_ok=True)
    d.to_csv(out / "samples.csv")
    print(f"wrote {d.n_rows} rows to {out / 'samples.csv'}")
    return 0


def _spec(s: dict, default: str) -> EstimatorSpec:
    return EstimatorSpec.parse(s.get("estimator") or default)


def cmd_attribute(s: dict) -> int:
    from .experiments import _write_results
    m = _model(s)
    seed, n_fit, n_eval = int(s["seed"]), _int(s, "n_fit", 200_000), int(s["n_eval"])
    spec = _spec(s, "binned")
    method = s["method"]
    eval_rows = sample(m, n_eval, derive_int(seed, "eval"))
    results = []
    from .attribution import InterventionalFits
    fits = InterventionalFits(m, spec, n_fit, seed)
    if method in ("shapley", "both"):
        data = Dataset.from_csv(s["data"], m.graph.nodes) if s.get("data") else fits.data(())
        results.append(shapley_values(data, eval_rows, spec, target=m.target,
                                      features=m.features))
    if method in ("cc-shapley", "both"):
        results.append(cc_shapley_values(m, eval_rows, spec, n_fit, seed, fits=fits,
                                         n_jobs=int(s["n_jobs"])))
    out = _out_dir(s, "attribute")
    _write_results(out, results, None, bool(s["render"]))
    print(f"wrote {', '.join(r.method for r in results)} attributions to {out}")
    return 0


def cmd_experiment(s: dict) -> int:
    name = s["name"]
    out = _out_dir(s, name)
    seed = int(s["seed"])
    render = bool(s["render"])
    if name == "breakfast":
        rep = run_breakfast(_int(s, "n_fit", 200_000), int(s["n_eval"]), seed, _spec(s, "binned"),
                            out=out, render=render)
        checks = rep.checks
    elif name == "diabetes-risk":
        rep = run_diabetes_risk(_int(s, "n_fit", 200_000), int(s["n_eval"]), seed, _spec(s, "binned"),
                                out=out, render=render)
        checks = rep.checks
    elif name == "linear-sweep":
        recs = run_linear_sweep(int(s["n_scms"]), n_rows=_int(s, "n_rows", 30_000), seed=seed,
                                n_jobs=int(s["n_jobs"]), out=out)
        checks = sweep_checks(recs)
    else:
        graph_name = s["graph"]
        builtin_graph = graph_name in SIGNALLING_GRAPHS
        if builtin_graph:
            graph = bi.signalling_graph(decoys=graph_name.endswith("+decoys"))
        else:
            graph = load_scm(graph_name).graph
        if s.get("data"):
            data = s["data"]
        else:
            if not builtin_graph:
                raise UsageError("--data is required with a custom graph")
            _, data = synthetic_signalling_data(_int(s, "n_rows", 20_000), derive_int(seed, "synthetic"),
                                                decoys=graph_name.endswith("+decoys"))
            out.mkdir(parents=True, exist_ok=True)
            data.to_csv(out / "data.csv")
        rep = run_discrete_pipeline(data, graph, _int(s, "n_fit", 50_000), int(s["n_eval"]), seed, out=out,
                                    render=render, context_rows=s.get("context_rows"),
                                    n_jobs=int(s["n_jobs"]))
        checks = rep.checks
    for c in checks:
        print(c.line())
    print(f"outputs in {out}")
    return 0


COMMANDS = {"graph-check": cmd_graph_check, "sample": cmd_sample, "attribute": cmd_attribute,
            "experiment": cmd_experiment}


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    try:
        s = _settings(args)
        return COMMANDS[args.command](s)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CausalShapError, ArithmeticError, MemoryError) as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
