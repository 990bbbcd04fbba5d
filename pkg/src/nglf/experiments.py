"""Synthetic sweeps: structure recovery vs dimensionality, covariance NLL vs n.

Both sweeps decompose into independent (cell, seed) units whose RNG seeds
are derived by hashing (base_seed, cell coordinates, seed index), so results
are identical whether cells run serially or across a process pool. Each
finished cell is persisted as a small JSON file under out_dir/cells/;
rerunning an interrupted sweep recomputes only the missing cells.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import _io
from .bounds import (
    BoundParams,
    UnreachableBudgetError,
    min_recoverable_p,
    sample_complexity_lower_bound,
)
from .covariance import (
    NotPositiveDefiniteError,
    diagonal_covariance,
    empirical_covariance,
    factor_covariance,
    gaussian_nll,
    ground_truth_covariance,
    shrinkage_covariance,
)
from .evaluation import cluster_assignment, nmi
from .model_synth import (
    NglfSpec,
    StandardizedData,
    generate_nglf,
    population_covariance,
    standardize,
)
from .solver import FactorModel, FitTrace, SecondMoment, SolverConfig, fit

__all__ = [
    "BlessingConfig",
    "CovarianceSweepConfig",
    "derive_seed",
    "refined_fit",
    "run_blessing",
    "run_covariance_sweep",
    "time_per_iteration",
]


def derive_seed(base_seed: int, *parts) -> int:
    """Deterministic 63-bit seed from (base_seed, cell coordinates).

    Hash-derived so that parallel scheduling order cannot change any
    cell's stream.
    """
    key = json.dumps([int(base_seed), *[str(p) for p in parts]])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass(frozen=True)
class BlessingConfig:
    """Structure recovery at fixed n while p grows (weak factors, many of them)."""

    p_values: tuple[int, ...] = (128, 256, 512, 1024, 2048, 4096)
    n: int = 300
    m: int = 64
    snr: float = 0.1
    seeds: int = 5
    base_seed: int = 0
    max_iters_per_stage: int = 10_000
    refine_rounds: int = 10
    workers: int = 1

    def __post_init__(self):
        if self.seeds < 1:
            raise ValueError("need at least one seed")
        if self.refine_rounds < 0:
            raise ValueError("refine_rounds must be non-negative")
        for p in self.p_values:
            if p % self.m:
                raise ValueError(f"p={p} is not a multiple of m={self.m}")


def refined_fit(
    source: StandardizedData | SecondMoment,
    cfg: SolverConfig,
    max_rounds: int = 10,
) -> tuple[FactorModel, FitTrace]:
    """Annealed fit followed by hard re-initialization from its own clusters.

    A single annealed descent reliably reaches a near-optimal objective
    when factors are strong, but in the weak-factor p >> n regime it often
    ends with two factors sharing one variable block while another block
    goes unclaimed. Moving a whole factor between blocks is a barrier no
    monotone line search crosses; moving individual variables between
    claimed blocks is not. Re-initializing each factor as an indicator
    over the variables it currently claims (argmax |R|, scaled 1/sqrt(count))
    converts the first problem into the second, and every accepted round
    lowers the same objective the solver always minimizes.

    Rounds repolish at eps = 0 and stop early once the assignment reaches
    a fixed point. Returns the best model seen by objective value, with
    the concatenated per-stage trace of the base fit and every round.
    """
    model, trace = fit(source, cfg)
    best = model
    polish_cfg = replace(cfg, anneal_schedule=(0.0,))
    reseed = np.random.default_rng(derive_seed(cfg.seed, "refine-reseed"))
    prev = None
    for _ in range(max_rounds):
        labels = np.argmax(np.abs(model.moments.R), axis=0)
        if prev is not None and np.array_equal(labels, prev):
            break
        prev = labels
        w0 = np.zeros((cfg.m, model.p))
        for j in range(cfg.m):
            members = np.flatnonzero(labels == j)
            if members.size:
                w0[j, members] = 1.0 / np.sqrt(members.size)
            else:
                w0[j] = 0.01 * reseed.standard_normal(model.p) / np.sqrt(model.p)
        model, round_trace = fit(source, polish_cfg, w0=w0)
        trace.stages.extend(round_trace.stages)
        if model.objective < best.objective:
            best = model
    return best, trace


def _blessing_cell(args) -> dict:
    cfg, p, idx = args
    spec = NglfSpec(p=p, m=cfg.m, snr=cfg.snr)
    ds = generate_nglf(spec, cfg.n, seed=derive_seed(cfg.base_seed, "data", p, idx))
    sd = standardize(ds.data)
    solver_cfg = SolverConfig(
        m=cfg.m,
        max_iters_per_stage=cfg.max_iters_per_stage,
        seed=derive_seed(cfg.base_seed, "init", p, idx),
    )
    model, trace = refined_fit(sd, solver_cfg, max_rounds=cfg.refine_rounds)
    score = nmi(cluster_assignment(model), ds.labels)
    return {
        "p": p,
        "m": cfg.m,
        "n": cfg.n,
        "s": cfg.snr,
        "seed": idx,
        "nmi": score,
        "stalled": trace.any_stalled,
    }


def _run_cells(cell_fn, jobs, cell_paths, workers: int) -> list[dict]:
    """Run the missing cells (serially or in a process pool).

    Each cell is persisted the moment it finishes, so an interrupted sweep
    loses at most the cells still in flight.
    """
    todo = [(job, path) for job, path in zip(jobs, cell_paths) if not path.exists()]
    if todo:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = pool.map(cell_fn, [job for job, _ in todo])
                for (_, path), res in zip(todo, results):
                    _io.write_json(path, res)
        else:
            for job, path in todo:
                _io.write_json(path, cell_fn(job))
    return [_io.read_json(path) for path in cell_paths]


def run_blessing(cfg: BlessingConfig, out_dir) -> Path:
    """NMI-vs-p sweep; writes nmi.csv, bound.csv, threshold.json.

    bound.csv holds the sample-complexity lower bound n_min(p) at the swept
    integer p values (the recoverability boundary for the sweep's m, s);
    threshold.json records where that curve crosses the sweep's n budget.
    """
    out = Path(out_dir)
    cells = out / "cells"
    jobs, paths = [], []
    for p in cfg.p_values:
        for idx in range(cfg.seeds):
            jobs.append((cfg, p, idx))
            paths.append(cells / f"blessing_p{p}_seed{idx}.json")
    rows = _run_cells(_blessing_cell, jobs, paths, cfg.workers)
    rows.sort(key=lambda r: (r["p"], r["seed"]))
    _io.write_csv(
        out / "nmi.csv",
        ("p", "m", "n", "s", "seed", "nmi"),
        [(r["p"], r["m"], r["n"], r["s"], r["seed"], r["nmi"]) for r in rows],
    )

    bound_rows = []
    for p in cfg.p_values:
        nmin = sample_complexity_lower_bound(BoundParams(p=p, m=cfg.m, snr=cfg.snr))
        bound_rows.append((p, nmin))
    _io.write_csv(out / "bound.csv", ("p", "n_min"), bound_rows)
    try:
        thr = min_recoverable_p(cfg.n, cfg.m, cfg.snr)
        _io.write_json(
            out / "threshold.json",
            {
                "n": cfg.n,
                "m": cfg.m,
                "s": cfg.snr,
                "crossing": thr.crossing,
                "crossing_floor": thr.crossing_floor,
                "smallest_recoverable_p": thr.smallest_recoverable_p,
                "next_multiple_of_m": thr.next_multiple_of_m,
                "forbidden_region": thr.forbidden_region,
            },
        )
    except UnreachableBudgetError as e:
        _io.write_json(out / "threshold.json", {"n": cfg.n, "unreachable": str(e)})
    return out / "nmi.csv"


@dataclass(frozen=True)
class CovarianceSweepConfig:
    """Held-out NLL of covariance estimators as the training size grows."""

    p: int = 512
    m: int = 8
    snr: float = 5.0
    n_values: tuple[int, ...] = (32, 64, 128, 256)
    n_test: int = 1000
    shrinkage_lambda: float = 0.5
    seeds: int = 5
    base_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.p % self.m:
            raise ValueError(f"p={self.p} is not a multiple of m={self.m}")
        if self.seeds < 1:
            raise ValueError("need at least one seed")


def _covariance_cell(args) -> dict:
    cfg, n, idx = args
    spec = NglfSpec(p=cfg.p, m=cfg.m, snr=cfg.snr)
    train = generate_nglf(spec, n, seed=derive_seed(cfg.base_seed, "train", n, idx))
    test = generate_nglf(
        spec, cfg.n_test, seed=derive_seed(cfg.base_seed, "test", n, idx)
    )
    sd = standardize(train.data)
    model, _ = fit(
        sd, SolverConfig(m=cfg.m, seed=derive_seed(cfg.base_seed, "init", n, idx))
    )
    pop_scale = np.sqrt(1.0 + cfg.snr)
    estimators = {
        "factor": factor_covariance(model),
        "empirical": empirical_covariance(sd.data, sd.means, sd.scales),
        "diagonal": diagonal_covariance(sd.data, sd.means, sd.scales),
        "shrinkage": shrinkage_covariance(
            sd.data, cfg.shrinkage_lambda, sd.means, sd.scales
        ),
        "ground_truth": ground_truth_covariance(
            population_covariance(spec) / (1.0 + cfg.snr),
            means=np.zeros(cfg.p),
            scales=np.full(cfg.p, pop_scale),
        ),
    }
    nlls = {}
    for name, est in estimators.items():
        try:
            nlls[name] = gaussian_nll(est, test.data)
        except NotPositiveDefiniteError:
            nlls[name] = float("nan")
    return {"n": n, "seed": idx, "nll": nlls}


def run_covariance_sweep(cfg: CovarianceSweepConfig, out_dir) -> Path:
    """NLL-vs-n sweep; writes nll.csv with one row per (method, n, seed)."""
    out = Path(out_dir)
    cells = out / "cells"
    jobs, paths = [], []
    for n in cfg.n_values:
        for idx in range(cfg.seeds):
            jobs.append((cfg, n, idx))
            paths.append(cells / f"covariance_n{n}_seed{idx}.json")
    results = _run_cells(_covariance_cell, jobs, paths, cfg.workers)
    rows = []
    for res in results:
        for method in sorted(res["nll"]):
            rows.append((method, res["n"], res["seed"], res["nll"][method]))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    _io.write_csv(out / "nll.csv", ("method", "n", "seed", "nll"), rows)
    return out / "nll.csv"


def time_per_iteration(
    p: int,
    m: int,
    n: int,
    iters: int = 25,
    repeats: int = 3,
    base_seed: int = 0,
) -> float:
    """Median wall-clock seconds per accepted solver iteration.

    Runs the real fit loop (single stage, eps = 0, effectively-zero
    relative tolerance) for a fixed iteration budget on a fresh synthetic
    instance, several times, and reports the median of total/iterations.
    """
    spec = NglfSpec(p=p, m=m, snr=1.0)
    ds = generate_nglf(spec, n, seed=derive_seed(base_seed, "timing-data", p))
    sd = standardize(ds.data)
    cfg = SolverConfig(
        m=m,
        anneal_schedule=(0.0,),
        max_iters_per_stage=iters,
        rel_tol=1e-300,
        seed=derive_seed(base_seed, "timing-init", p),
    )
    per_iter = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        _, trace = fit(sd, cfg)
        elapsed = time.perf_counter() - t0
        done = sum(len(st.objectives) - 1 for st in trace.stages)
        if done == 0:
            raise RuntimeError("no iterations accepted during timing run")
        per_iter.append(elapsed / done)
    return float(np.median(per_iter))
