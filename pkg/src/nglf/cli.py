"""Command-line front end.

Subcommands: synth, fit, bound, eval (nmi|nll), experiment (blessing|covariance).

Every file-writing run drops a manifest_<command>.json echoing the fully
resolved configuration; `--config <manifest>` replays it (config values
override flags), and a replayed run reproduces its outputs byte-identically.
The output directory resolves as: --config value, else --out-dir flag, else
$NGLF_OUT_DIR, else the current directory.

Exit codes: 0 success; 2 invalid input; 3 a fit stage stalled (outputs are
still written); 4 internal numeric error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import _io
from .bounds import (
    BoundInapplicableError,
    BoundParams,
    UnreachableBudgetError,
    min_recoverable_p,
    sample_complexity_lower_bound,
)
from .covariance import (
    diagonal_covariance,
    empirical_covariance,
    factor_covariance,
    gaussian_nll,
    shrinkage_covariance,
)
from .evaluation import cluster_assignment, nmi
from .experiments import (
    BlessingConfig,
    CovarianceSweepConfig,
    run_blessing,
    run_covariance_sweep,
)
from .model_synth import DegenerateColumnError, NglfSpec, generate_nglf, standardize
from .solver import DEFAULT_ANNEAL_SCHEDULE, NumericError, SolverConfig, fit

__all__ = ["main"]

EXIT_OK = 0
EXIT_INVALID_INPUT = 2
EXIT_STALLED = 3
EXIT_NUMERIC = 4


def _parse_list(text, cast):
    if text is None:
        return None
    return [cast(tok) for tok in str(text).split(",") if tok.strip() != ""]


def _resolve(args, keys: dict) -> dict:
    """Merge flag values with an optional --config JSON (config wins)."""
    params = dict(keys)
    if getattr(args, "config", None):
        loaded = _io.read_json(args.config)
        cmd = loaded.pop("command", None)
        if cmd is not None and cmd != params["command"]:
            raise ValueError(
                f"config was written by {cmd!r}, not {params['command']!r}"
            )
        for k, v in loaded.items():
            if k not in params:
                raise ValueError(f"unknown config key {k!r}")
            params[k] = v
    return params


def _out_dir(params) -> Path:
    out = params.get("out_dir") or os.environ.get("NGLF_OUT_DIR") or "."
    params["out_dir"] = str(out)
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(out: Path, params: dict) -> None:
    name = "manifest_" + params["command"].replace(" ", "_") + ".json"
    _io.write_json(out / name, params)


def _cmd_synth(args) -> int:
    params = _resolve(
        args,
        {
            "command": "synth",
            "p": args.p,
            "m": args.m,
            "snr": args.snr,
            "n": args.n,
            "seed": args.seed,
            "partition": _parse_list(args.partition, int),
            "out_dir": args.out_dir,
        },
    )
    out = _out_dir(params)
    spec = NglfSpec(
        p=int(params["p"]),
        m=int(params["m"]),
        snr=float(params["snr"]),
        partition=tuple(params["partition"]) if params["partition"] else (),
    )
    params["partition"] = list(spec.partition)
    ds = generate_nglf(spec, int(params["n"]), int(params["seed"]))
    _io.write_matrix_csv(out / "data.csv", ds.data)
    _io.write_json(out / "labels.json", [int(g) for g in ds.labels])
    _io.write_json(
        out / "spec.json",
        {"p": spec.p, "m": spec.m, "snr": spec.snr, "partition": list(spec.partition)},
    )
    _write_manifest(out, params)
    print(f"wrote {out / 'data.csv'} ({params['n']} x {spec.p})")
    return EXIT_OK


def _cmd_fit(args) -> int:
    params = _resolve(
        args,
        {
            "command": "fit",
            "data": args.data,
            "m": args.m,
            "schedule": _parse_list(args.schedule, float),
            "max_iters": args.max_iters,
            "rel_tol": args.rel_tol,
            "seed": args.seed,
            "out_dir": args.out_dir,
        },
    )
    out = _out_dir(params)
    raw = _io.read_matrix_csv(params["data"])
    sd = standardize(raw)
    schedule = params["schedule"] or list(DEFAULT_ANNEAL_SCHEDULE)
    params["schedule"] = [float(e) for e in schedule]
    cfg = SolverConfig(
        m=int(params["m"]),
        anneal_schedule=tuple(params["schedule"]),
        max_iters_per_stage=int(params["max_iters"]),
        rel_tol=float(params["rel_tol"]),
        seed=int(params["seed"]),
    )
    model, trace = fit(sd, cfg)
    _io.write_json(out / "model.json", _io.model_to_dict(model))
    _io.write_csv(out / "trace.csv", _io.TRACE_HEADER, trace.rows())
    _write_manifest(out, params)
    iters = sum(len(st.objectives) - 1 for st in trace.stages)
    print(
        f"objective={_io.format_value(model.objective)} iterations={iters} "
        f"stalled={trace.any_stalled}"
    )
    return EXIT_STALLED if trace.any_stalled else EXIT_OK


def _cmd_bound(args) -> int:
    params = _resolve(
        args,
        {
            "command": "bound",
            "p": args.p,
            "m": args.m,
            "snr": args.snr,
            "err": args.err,
            "n_budget": args.n_budget,
            "p_list": _parse_list(args.p_list, int),
            "out_dir": args.out_dir,
        },
    )
    m, snr, err = int(params["m"]), float(params["snr"]), float(params["err"])
    if params["p"] is None and not params["p_list"] and params["n_budget"] is None:
        raise ValueError("bound needs at least one of --p, --p-list, --n-budget")
    if params["p"] is not None:
        nmin = sample_complexity_lower_bound(
            BoundParams(p=int(params["p"]), m=m, snr=snr, err=err)
        )
        tag = "" if nmin > 0 else "  (vacuous: no constraint)"
        print(f"p={params['p']} n_min={_io.format_value(nmin)}{tag}")
    if params["p_list"]:
        out = _out_dir(params)
        rows = []
        for p in params["p_list"]:
            rows.append(
                (p, sample_complexity_lower_bound(BoundParams(p=int(p), m=m, snr=snr, err=err)))
            )
        _io.write_csv(out / "bound.csv", ("p", "n_min"), rows)
        _write_manifest(out, params)
        print(f"wrote {out / 'bound.csv'} ({len(rows)} rows)")
    if params["n_budget"] is not None:
        try:
            thr = min_recoverable_p(float(params["n_budget"]), m, snr, err)
        except UnreachableBudgetError as e:
            print(f"unreachable: {e}")
            return EXIT_OK
        region = (
            f"({m}, {_io.format_value(thr.crossing)})"
            if thr.forbidden_region
            else "none"
        )
        print(
            f"crossing={_io.format_value(thr.crossing)} "
            f"floor={thr.crossing_floor} "
            f"smallest_recoverable_p={thr.smallest_recoverable_p} "
            f"next_multiple_of_m={thr.next_multiple_of_m} "
            f"forbidden_region={region}"
        )
    return EXIT_OK


def _load_model(path):
    return _io.model_from_dict(_io.read_json(path))


def _cmd_eval_nmi(args) -> int:
    params = _resolve(
        args,
        {"command": "eval nmi", "model": args.model, "labels": args.labels},
    )
    model = _load_model(params["model"])
    labels = _io.read_json(params["labels"])
    if isinstance(labels, dict):
        labels = labels["labels"]
    score = nmi(cluster_assignment(model), np.asarray(labels))
    print(f"nmi {_io.format_value(score)}")
    return EXIT_OK


def _build_estimate(params):
    kind = str(params["estimator"])
    lam = None
    if kind.startswith("shrinkage:"):
        kind, lam = "shrinkage", float(kind.split(":", 1)[1])
    if kind == "factor":
        if not params["model"]:
            raise ValueError("--estimator factor needs --model")
        return factor_covariance(_load_model(params["model"]))
    if not params["train"]:
        raise ValueError(f"--estimator {kind} needs --train")
    sd = standardize(_io.read_matrix_csv(params["train"]))
    if kind == "empirical":
        return empirical_covariance(sd.data, sd.means, sd.scales)
    if kind == "diagonal":
        return diagonal_covariance(sd.data, sd.means, sd.scales)
    if kind == "shrinkage":
        return shrinkage_covariance(sd.data, lam, sd.means, sd.scales)
    raise ValueError(f"unknown estimator {params['estimator']!r}")


def _cmd_eval_nll(args) -> int:
    params = _resolve(
        args,
        {
            "command": "eval nll",
            "test": args.test,
            "estimator": args.estimator,
            "model": args.model,
            "train": args.train,
        },
    )
    est = _build_estimate(params)
    test = _io.read_matrix_csv(params["test"])
    print(f"nll {_io.format_value(gaussian_nll(est, test))}")
    return EXIT_OK


def _cmd_experiment_blessing(args) -> int:
    params = _resolve(
        args,
        {
            "command": "experiment blessing",
            "p_list": _parse_list(args.p_list, int),
            "n": args.n,
            "m": args.m,
            "snr": args.snr,
            "seeds": args.seeds,
            "base_seed": args.base_seed,
            "max_iters": args.max_iters,
            "refine_rounds": args.refine_rounds,
            "workers": args.workers,
            "out_dir": args.out_dir,
        },
    )
    out = _out_dir(params)
    cfg = BlessingConfig(
        p_values=tuple(params["p_list"]) if params["p_list"] else BlessingConfig.p_values,
        n=int(params["n"]),
        m=int(params["m"]),
        snr=float(params["snr"]),
        seeds=int(params["seeds"]),
        base_seed=int(params["base_seed"]),
        max_iters_per_stage=int(params["max_iters"]),
        refine_rounds=int(params["refine_rounds"]),
        workers=int(params["workers"]),
    )
    params["p_list"] = list(cfg.p_values)
    _write_manifest(out, params)
    path = run_blessing(cfg, out)
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_experiment_covariance(args) -> int:
    params = _resolve(
        args,
        {
            "command": "experiment covariance",
            "p": args.p,
            "m": args.m,
            "snr": args.snr,
            "n_list": _parse_list(args.n_list, int),
            "n_test": args.n_test,
            "shrinkage_lambda": args.shrinkage_lambda,
            "seeds": args.seeds,
            "base_seed": args.base_seed,
            "workers": args.workers,
            "out_dir": args.out_dir,
        },
    )
    out = _out_dir(params)
    cfg = CovarianceSweepConfig(
        p=int(params["p"]),
        m=int(params["m"]),
        snr=float(params["snr"]),
        n_values=tuple(params["n_list"])
        if params["n_list"]
        else CovarianceSweepConfig.n_values,
        n_test=int(params["n_test"]),
        shrinkage_lambda=float(params["shrinkage_lambda"]),
        seeds=int(params["seeds"]),
        base_seed=int(params["base_seed"]),
        workers=int(params["workers"]),
    )
    params["n_list"] = list(cfg.n_values)
    _write_manifest(out, params)
    path = run_covariance_sweep(cfg, out)
    print(f"wrote {path}")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="nglf",
        description="Non-overlapping Gaussian latent factor models: "
        "synthesize, fit, bound, evaluate, sweep.",
    )
    sub = top.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out-dir", default=None, help="output directory")
        p.add_argument("--config", default=None, help="JSON config/manifest override")

    ps = sub.add_parser("synth", help="sample a synthetic dataset")
    ps.add_argument("--p", type=int, required=True)
    ps.add_argument("--m", type=int, required=True)
    ps.add_argument("--snr", type=float, default=1.0)
    ps.add_argument("--n", type=int, required=True)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--partition", default=None, help="comma list of group labels")
    add_common(ps)
    ps.set_defaults(func=_cmd_synth)

    pf = sub.add_parser("fit", help="fit a factor model to a data CSV")
    pf.add_argument("--data", required=True)
    pf.add_argument("--m", type=int, required=True)
    pf.add_argument("--schedule", default=None, help="comma list of anneal eps values")
    pf.add_argument("--max-iters", type=int, default=10_000)
    pf.add_argument("--rel-tol", type=float, default=1e-8)
    pf.add_argument("--seed", type=int, default=0)
    add_common(pf)
    pf.set_defaults(func=_cmd_fit)

    pb = sub.add_parser("bound", help="sample-complexity lower bound")
    pb.add_argument("--p", type=int, default=None)
    pb.add_argument("--m", type=int, required=True)
    pb.add_argument("--snr", type=float, required=True)
    pb.add_argument("--err", type=float, default=0.0)
    pb.add_argument("--n-budget", type=float, default=None)
    pb.add_argument("--p-list", default=None, help="comma list for a sweep CSV")
    add_common(pb)
    pb.set_defaults(func=_cmd_bound)

    pe = sub.add_parser("eval", help="score a fitted model or estimate")
    esub = pe.add_subparsers(dest="mode", required=True)
    pen = esub.add_parser("nmi", help="cluster agreement with ground-truth labels")
    pen.add_argument("--model", required=True)
    pen.add_argument("--labels", required=True)
    pen.add_argument("--config", default=None)
    pen.set_defaults(func=_cmd_eval_nmi)
    pel = esub.add_parser("nll", help="held-out negative log-likelihood")
    pel.add_argument("--test", required=True)
    pel.add_argument(
        "--estimator",
        required=True,
        help="factor | empirical | diagonal | shrinkage:<lambda>",
    )
    pel.add_argument("--model", default=None)
    pel.add_argument("--train", default=None)
    pel.add_argument("--config", default=None)
    pel.set_defaults(func=_cmd_eval_nll)

    px = sub.add_parser("experiment", help="multi-cell synthetic sweeps")
    xsub = px.add_subparsers(dest="mode", required=True)
    pxb = xsub.add_parser("blessing", help="NMI vs dimensionality sweep")
    pxb.add_argument("--p-list", default=None)
    pxb.add_argument("--n", type=int, default=300)
    pxb.add_argument("--m", type=int, default=64)
    pxb.add_argument("--snr", type=float, default=0.1)
    pxb.add_argument("--seeds", type=int, default=5)
    pxb.add_argument("--base-seed", type=int, default=0)
    pxb.add_argument("--max-iters", type=int, default=10_000)
    pxb.add_argument("--refine-rounds", type=int, default=10)
    pxb.add_argument("--workers", type=int, default=1)
    add_common(pxb)
    pxb.set_defaults(func=_cmd_experiment_blessing)
    pxc = xsub.add_parser("covariance", help="held-out NLL vs training size sweep")
    pxc.add_argument("--p", type=int, default=512)
    pxc.add_argument("--m", type=int, default=8)
    pxc.add_argument("--snr", type=float, default=5.0)
    pxc.add_argument("--n-list", default=None)
    pxc.add_argument("--n-test", type=int, default=1000)
    pxc.add_argument("--shrinkage-lambda", type=float, default=0.5)
    pxc.add_argument("--seeds", type=int, default=5)
    pxc.add_argument("--base-seed", type=int, default=0)
    pxc.add_argument("--workers", type=int, default=1)
    add_common(pxc)
    pxc.set_defaults(func=_cmd_experiment_covariance)

    return top


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (
        ValueError,
        OSError,
        KeyError,
        DegenerateColumnError,
        BoundInapplicableError,
    ) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID_INPUT
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
