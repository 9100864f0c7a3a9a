"""Command-line entry point.

Exit status is 0 when the run finished and its self-checks passed, 1 when a
self-check failed, and 2 on configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import export
from .config import CliConfig, default_config_path, load_config
from .coverage import DensityField, run_lloyd
from .errors import ECError
from .experiments import rkhs_consistency, variance_decay
from .sim import initial_positions, run_ec, run_violations, true_density

log = logging.getLogger("eccoverage")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_ERROR = 0, 1, 2


def _load(args) -> CliConfig:
    cfg = load_config(args.config or default_config_path())
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "iters", None) is not None:
        changes["max_iters"] = args.iters
    if changes:
        cfg.scenario = cfg.scenario.replace(**changes)
    if args.out is not None:
        cfg.out_dir = args.out
    return cfg


def _meta(cfg: CliConfig) -> dict:
    return {"config_hash": cfg.scenario.digest(), "seed": cfg.scenario.seed}


def cmd_simulate(args) -> int:
    cfg = _load(args)
    run = run_ec(cfg.scenario, snapshots=cfg.snapshots)
    paths = export.write_run(run, cfg.out_dir)
    h_final = run.final_coverage()
    print(f"switch iteration: {run.switch_iteration if run.switched else 'none'}")
    print(f"iterations run:   {len(run.records)} (phase II settled: {run.converged})")
    print(f"final H (true field): {h_final:.6g}")
    if run.ideal_positions is not None:
        print(f"ideal H (true field): {run.ideal_coverage():.6g}")
    print(f"final max variance:   {run.records[-1].var_max:.6g}")
    print(f"wrote {len(paths)} files to {cfg.out_dir}")
    problems = run_violations(run)
    for p in problems:
        print(f"CHECK FAILED: {p}", file=sys.stderr)
    return EXIT_CHECK_FAILED if problems else EXIT_OK


def cmd_lloyd(args) -> int:
    cfg = _load(args)
    sc = cfg.scenario
    density: DensityField = true_density(sc)
    res = run_lloyd(initial_positions(sc), density, sc.domain, max_iters=sc.max_iters)
    n = sc.agent_count
    header = ["iteration", "H"] + [f"{c}{i}" for i in range(n) for c in ("x", "y")]
    rows = [
        [k, h, *np.asarray(pos).ravel().tolist()]
        for k, (pos, h) in enumerate(zip(res.history, res.coverage))
    ]
    export.write_csv(Path(cfg.out_dir) / "lloyd.csv", header, rows, _meta(cfg))
    print(f"Lloyd iterations: {res.iterations} (converged: {res.converged})")
    print(f"H: {res.coverage[0]:.6g} -> {res.coverage[-1]:.6g}")
    rises = [k for k in range(1, len(res.coverage)) if res.coverage[k] > res.coverage[k - 1] + 1e-9]
    if rises:
        print(f"CHECK FAILED: H increased at iterations {rises}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    if not res.converged:
        print("warning: iteration cap reached before the fixed point", file=sys.stderr)
    return EXIT_OK


def cmd_variance_decay(args) -> int:
    cfg = _load(args)
    trials = args.trials if args.trials is not None else cfg.trials
    eps = args.epsilon if args.epsilon is not None else cfg.epsilon
    res = variance_decay(cfg.scenario, trials, eps)
    rows = zip(res.t.tolist(), res.fraction.tolist(), res.mean_max_variance.tolist())
    meta = _meta(cfg) | {"trials": trials, "epsilon": eps}
    export.write_csv(
        Path(cfg.out_dir) / "variance_decay.csv", ["t", "fraction", "mean_max_variance"], rows, meta
    )
    hits = res.first_hit(eps)
    print(f"trials reaching max variance <= {eps}: {sum(h is not None for h in hits)}/{trials}")
    print(f"first t per trial: {hits}")
    if np.any(np.diff(res.fraction) < 0):
        print("CHECK FAILED: success fraction decreased", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_rkhs_consistency(args) -> int:
    cfg = _load(args)
    alpha = args.alpha if args.alpha is not None else cfg.alpha
    trials = args.trials if args.trials is not None else 1
    t_list = cfg.t_list if args.t_list is None else [int(t) for t in args.t_list.split(",")]
    rows = rkhs_consistency(cfg.scenario, alpha, t_list, gamma0=cfg.gamma0, trials=trials)
    meta = _meta(cfg) | {"alpha": alpha}
    export.write_csv(
        Path(cfg.out_dir) / "rkhs_consistency.csv",
        ["trial", "t", "gamma", "sup_error", "mean_error"],
        [(r.trial, r.t, r.gamma, r.sup_error, r.mean_error) for r in rows],
        meta,
    )
    for r in rows:
        print(f"trial {r.trial} t={r.t:5d} gamma={r.gamma:.4g} sup={r.sup_error:.4g} mean={r.mean_error:.4g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config (default: the shipped scenario)")
    common.add_argument("--seed", type=int, help="override the config seed (u64)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--iters", type=int, help="override max_iters")

    p = argparse.ArgumentParser(prog="eccoverage", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="run the estimation + coverage loop")
    s.set_defaults(func=cmd_simulate)
    s = sub.add_parser("lloyd", parents=[common], help="plain Lloyd iteration on the true field")
    s.set_defaults(func=cmd_lloyd)

    exp = sub.add_parser("experiment", help="verification experiments")
    esub = exp.add_subparsers(dest="experiment", required=True)
    e = esub.add_parser("variance-decay", parents=[common])
    e.add_argument("--trials", type=int)
    e.add_argument("--epsilon", type=float)
    e.set_defaults(func=cmd_variance_decay)
    e = esub.add_parser("rkhs-consistency", parents=[common])
    e.add_argument("--alpha", type=float)
    e.add_argument("--trials", type=int)
    e.add_argument("--t-list", help="comma-separated sample counts, e.g. 50,200,800")
    e.set_defaults(func=cmd_rkhs_consistency)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ECError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
