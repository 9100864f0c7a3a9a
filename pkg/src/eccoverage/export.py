"""Plot-ready CSV dumps of runs and experiments.

Every file starts with a ``#`` comment line carrying the config digest and
seed, then a header row.  Floats are written with ``repr`` so identical runs
give byte-identical files.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows, meta: dict) -> Path:
    path = Path(path)
    buf = io.StringIO()
    buf.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())
    return path


def run_meta(run) -> dict:
    return {"config_hash": run.config.digest(), "seed": run.config.seed}


def write_trajectory(run, out_dir) -> Path:
    rows = []
    for rec in run.records:
        for i, (x, y) in enumerate(rec.positions):
            rows.append((rec.iteration, i, x, y, int(rec.phase)))
    return write_csv(Path(out_dir) / "trajectory.csv", ["iteration", "agent", "x", "y", "phase"], rows, run_meta(run))


def write_posterior_stats(run, out_dir) -> Path:
    rows = [(r.iteration, r.var_max, r.var_mean, r.var_min, r.a) for r in run.records]
    return write_csv(
        Path(out_dir) / "posterior_stats.csv",
        ["iteration", "var_max", "var_mean", "var_min", "a"],
        rows,
        run_meta(run),
    )


def write_coverage(run, out_dir) -> Path:
    rows = [(r.iteration, int(r.phase), r.coverage_estimate, r.coverage_true) for r in run.records]
    return write_csv(
        Path(out_dir) / "coverage.csv",
        ["iteration", "phase", "h_estimate", "h_true"],
        rows,
        run_meta(run),
    )


def write_field_snapshot(run, iteration: int, out_dir) -> Path:
    """Mean and variance grids as (ny, nx) matrices, row index = y index.

    Nodes outside the domain are written as ``nan``.
    """
    grid = run.grid
    mean, var = run.snapshots[iteration]
    meta = dict(run_meta(run))
    meta.update(
        iteration=iteration,
        origin_x=repr(float(grid.origin[0])),
        origin_y=repr(float(grid.origin[1])),
        step=repr(grid.step),
        nx=grid.nx,
        ny=grid.ny,
    )
    rows = []
    for name, vals in (("mean", mean), ("variance", var)):
        mat = grid.to_matrix(vals)
        for j in range(grid.ny):
            rows.append([name, j, *mat[j]])
    header = ["field", "row"] + [f"c{i}" for i in range(grid.nx)]
    return write_csv(Path(out_dir) / f"fields_k{iteration}.csv", header, rows, meta)


def write_final_positions(run, out_dir) -> Path:
    ideal = run.ideal_positions
    rows = []
    for i, p in enumerate(run.final_positions):
        q = (np.nan, np.nan) if ideal is None else ideal[i]
        rows.append((i, p[0], p[1], q[0], q[1]))
    return write_csv(
        Path(out_dir) / "final_positions.csv",
        ["agent", "final_x", "final_y", "ideal_x", "ideal_y"],
        rows,
        run_meta(run),
    )


def write_run(run, out_dir) -> list:
    paths = [
        write_trajectory(run, out_dir),
        write_posterior_stats(run, out_dir),
        write_coverage(run, out_dir),
        write_final_positions(run, out_dir),
    ]
    for k in sorted(run.snapshots):
        paths.append(write_field_snapshot(run, k, out_dir))
    return paths
