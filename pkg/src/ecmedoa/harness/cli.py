"""Command-line entry point: ``ecmedoa {simulate,estimate,montecarlo,crlb}``.

Exit status is 0 on success, 2 for invalid input or configuration and 1 for
runtime failures.
"""

import argparse
import csv
import dataclasses
import json
import logging
import sys

import numpy as np

from ..crlb import crlb_beta, numerical_rank
from ..ecme import EcmeOptions, grid_initializer, run_ecme
from ..exceptions import DomainError, SingularModelError
from ..likelihood import ModelParams
from ..model import sample_covariance, sample_snapshots
from . import io
from .montecarlo import run_montecarlo, write_outputs


def _cmd_simulate(args):
    sc = io.load_scenario(args.scenario)
    if args.L < 1:
        raise io.ConfigError("--L", "must be >= 1")
    snaps = sample_snapshots(sc, args.L, args.seed)
    io.write_snapshots(args.out, snaps)
    if args.covariance_out:
        io.write_covariance(args.covariance_out, sample_covariance(snaps))
    return 0


def _cmd_estimate(args):
    if args.snapshots:
        R_hat = sample_covariance(io.read_snapshots(args.snapshots))
        R, L = R_hat.matrix, R_hat.L
    else:
        if args.L is None:
            raise io.ConfigError("--L", "required with --covariance")
        R, L = io.read_covariance(args.covariance), args.L
    W = R.shape[0]
    if args.init_deg:
        betas0 = np.deg2rad(args.init_deg)
        if np.any(betas0 <= 0) or np.any(betas0 >= np.pi):
            raise io.ConfigError("--init-deg", "angles must lie in (0, 180)")
    else:
        if args.V is None:
            raise io.ConfigError("--V", "required with --grid-step-deg")
        betas0 = grid_initializer(R, args.V, np.deg2rad(args.grid_step_deg))
    V = betas0.size
    if V >= W:
        raise io.ConfigError("--init-deg", f"need fewer sources than sensors (W={W})")
    opts = EcmeOptions(max_iters=args.max_iters, beta_tol=np.deg2rad(args.beta_tol_deg),
                       grad_tol=args.grad_tol)
    init = ModelParams(betas0, np.eye(V), np.ones(W))
    result = run_ecme(R, L, init, opts)
    text = json.dumps(io.estimate_to_dict(result), indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def _cmd_montecarlo(args):
    config = io.load_experiment(args.config)
    overrides = {}
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.out_dir is not None:
        overrides["outputs"] = args.out_dir
    if any(v is not None and v < 1 for k, v in overrides.items() if k != "outputs"):
        raise io.ConfigError("--trials/--workers", "must be >= 1")
    config = dataclasses.replace(config, **overrides)
    table, records = run_montecarlo(config)
    rmse_path, _ = write_outputs(config.outputs, table, records, timing=args.timing)
    for row in table:
        print(f"L={row.L:<6d} src={row.src:<7s} rmse={row.rmse_deg:.4f} deg  "
              f"sqrt(CRLB)={row.sqrt_crlb_deg:.4f} deg  failures={row.failures}/{row.trials}")
    print(f"wrote {rmse_path}")
    return 0


def _cmd_crlb(args):
    sc = io.load_scenario(args.scenario)
    if any(L < 1 for L in args.L):
        raise io.ConfigError("--L", "values must be >= 1")
    truth = ModelParams(sc.betas, sc.source_cov, sc.noise)
    if args.source_rank == "full":
        rank = None
    elif args.source_rank == "auto":
        r = numerical_rank(sc.source_cov)
        rank = r if r < sc.V else None
    else:
        try:
            rank = int(args.source_rank)
        except ValueError:
            raise io.ConfigError("--source-rank", "expected auto, full or an integer") from None
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        wr = csv.writer(out)
        wr.writerow(["L", "src", "crlb_rad2", "sqrt_crlb_deg"])
        for L in args.L:
            bound = crlb_beta(truth, L, rank)
            for v, b in enumerate(bound):
                wr.writerow([L, v + 1, repr(float(b)), repr(float(np.rad2deg(np.sqrt(b))))])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="ecmedoa", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw snapshots for a scenario")
    s.add_argument("--scenario", required=True, help="scenario JSON")
    s.add_argument("--L", type=int, required=True, help="number of snapshots")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="snapshot CSV (sensor,t,re,im)")
    s.add_argument("--covariance-out", help="also write the sample covariance CSV")
    s.set_defaults(func=_cmd_simulate)

    e = sub.add_parser("estimate", help="run ECME on one data set")
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--snapshots", help="snapshot CSV")
    src.add_argument("--covariance", help="sample covariance CSV (row,col,re,im)")
    e.add_argument("--L", type=int, help="snapshot count behind --covariance")
    ini = e.add_mutually_exclusive_group(required=True)
    ini.add_argument("--init-deg", type=float, nargs="+", help="initial angles in degrees")
    ini.add_argument("--grid-step-deg", type=float, help="grid initializer step in degrees")
    e.add_argument("--V", type=int, help="number of sources (grid initializer)")
    e.add_argument("--beta-tol-deg", type=float, default=0.001)
    e.add_argument("--grad-tol", type=float, default=1e-3,
                   help="CM-step stop on the gradient norm of -J/L")
    e.add_argument("--max-iters", type=int, default=1000)
    e.add_argument("--out", help="result JSON (default: stdout)")
    e.set_defaults(func=_cmd_estimate)

    m = sub.add_parser("montecarlo", help="RMSE vs CRLB experiment")
    m.add_argument("--config", required=True, help="experiment JSON")
    m.add_argument("--trials", type=int, help="override trial count")
    m.add_argument("--workers", type=int, help="override worker processes")
    m.add_argument("--out-dir", help="override output directory")
    m.add_argument("--timing", action="store_true",
                   help="add wall time to trials.csv (output no longer reproducible)")
    m.set_defaults(func=_cmd_montecarlo)

    c = sub.add_parser("crlb", help="stochastic CRLB of the angles")
    c.add_argument("--scenario", required=True, help="scenario JSON")
    c.add_argument("--L", type=int, nargs="+", required=True)
    c.add_argument("--source-rank", default="auto",
                   help="'auto' (factor model when O is singular), 'full', or an integer")
    c.add_argument("--out", help="CRLB CSV (default: stdout)")
    c.set_defaults(func=_cmd_crlb)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DomainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SingularModelError, np.linalg.LinAlgError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
