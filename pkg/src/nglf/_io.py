"""File formats: numeric CSV and JSON serialization for models and traces.

CSV is comma-separated UTF-8 with a header row; floats are written with
'%.17g' (17 significant digits), which round-trips float64 exactly. JSON is
written with sorted keys and no timestamps, so identical inputs produce
byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .solver import FactorModel, FitTrace, MomentSet, SolverConfig

__all__ = [
    "format_value",
    "write_csv",
    "read_csv",
    "write_matrix_csv",
    "read_matrix_csv",
    "write_json",
    "read_json",
    "model_to_dict",
    "model_from_dict",
    "trace_rows",
    "TRACE_HEADER",
]

TRACE_HEADER = ("stage", "iter", "objective", "alpha")


def format_value(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([format_value(x) for x in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"empty CSV file: {path}") from None
        return header, [row for row in reader if row]


def write_matrix_csv(path, x: np.ndarray, prefix: str = "x") -> None:
    """n x p matrix with header prefix0,...,prefix{p-1}."""
    x = np.asarray(x, dtype=float)
    header = [f"{prefix}{i}" for i in range(x.shape[1])]
    write_csv(path, header, x)


def read_matrix_csv(path) -> np.ndarray:
    header, rows = read_csv(path)
    if not rows:
        raise ValueError(f"CSV has a header but no data rows: {path}")
    try:
        return np.array([[float(v) for v in row] for row in rows])
    except ValueError as e:
        raise ValueError(f"non-numeric cell in {path}: {e}") from None


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def model_to_dict(model: FactorModel) -> dict:
    """JSON-ready form of a fitted model.

    Carries W, z2, and the data-derived moment matrices R and M so a loaded
    model supports clustering and covariance construction without re-reading
    the training data (B, r, Q, q, ws are all derived from these).
    """
    cfg = model.config
    return {
        "m": model.m,
        "p": model.p,
        "W": model.W.tolist(),
        "z2": model.z2.tolist(),
        "R": model.moments.R.tolist(),
        "M": model.moments.M.tolist(),
        "means": model.means.tolist(),
        "scales": model.scales.tolist(),
        "objective": model.objective,
        "config": {
            "m": cfg.m,
            "anneal_schedule": list(cfg.anneal_schedule),
            "max_iters_per_stage": cfg.max_iters_per_stage,
            "rel_tol": cfg.rel_tol,
            "armijo_c1": cfg.armijo_c1,
            "ls_shrink": cfg.ls_shrink,
            "r_clip": cfg.r_clip,
            "seed": cfg.seed,
        },
    }


def _moments_from_stored(rmat: np.ndarray, mlat: np.ndarray, z2: np.ndarray) -> MomentSet:
    b = rmat / (1.0 - rmat * rmat)
    r = np.einsum("ji,ji->i", rmat, b)
    mfull = mlat.copy()
    np.fill_diagonal(mfull, 1.0)
    qmat = mfull @ b
    q = np.einsum("ji,ji->i", qmat, b)
    ws = rmat * np.sqrt(z2)[:, None]
    return MomentSet(z2=z2, R=rmat, B=b, r=r, M=mlat, Q=qmat, q=q, ws=ws)


def model_from_dict(d: dict) -> FactorModel:
    cfg = SolverConfig(
        m=int(d["config"]["m"]),
        anneal_schedule=tuple(d["config"]["anneal_schedule"]),
        max_iters_per_stage=int(d["config"]["max_iters_per_stage"]),
        rel_tol=float(d["config"]["rel_tol"]),
        armijo_c1=float(d["config"]["armijo_c1"]),
        ls_shrink=float(d["config"]["ls_shrink"]),
        r_clip=float(d["config"]["r_clip"]),
        seed=int(d["config"]["seed"]),
    )
    z2 = np.array(d["z2"], dtype=float)
    rmat = np.array(d["R"], dtype=float)
    mlat = np.array(d["M"], dtype=float)
    return FactorModel(
        W=np.array(d["W"], dtype=float),
        z2=z2,
        moments=_moments_from_stored(rmat, mlat, z2),
        means=np.array(d["means"], dtype=float),
        scales=np.array(d["scales"], dtype=float),
        config=cfg,
        objective=float(d["objective"]),
    )


def trace_rows(trace: FitTrace):
    return trace.rows()
