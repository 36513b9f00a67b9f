"""Command-line entry point: ``wsnfusion sweep`` and ``wsnfusion allocate``."""

import argparse
import json
import sys

import numpy as np

from ..allocation import COHERENT, CONDITIONAL_J_GRADIENT, allocate
from ..errors import ConfigurationError
from ..phy import amplitude_error_variance, estimated_gain_mean
from .config import load_config
from .engine import point_context, run_sweep, write_csv

EXIT_CONFIG = 2


def _parser():
    ap = argparse.ArgumentParser(prog="wsnfusion",
                                 description="Distributed detection Pe sweeps and power allocation.")
    sub = ap.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("sweep", help="run a Pe sweep and write CSV")
    sw.add_argument("--config", required=True, help="experiment config file")
    sw.add_argument("--out", help="CSV path; defaults to the config's output key, else stdout")
    sw.add_argument("--trials", type=int, help="trials per point, overrides the config")
    sw.add_argument("--seed", type=int, help="base seed, overrides the config")
    sw.add_argument("--workers", type=int, help="threads per sweep point")

    al = sub.add_parser("allocate", help="print the power allocation for one sweep point as JSON")
    al.add_argument("--config", required=True, help="experiment config file")
    al.add_argument("--point", type=int, default=0, help="grid index (default 0)")
    return ap


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


def _mean_gain(ctx):
    # Conditional J needs a realization; report the plan at the mean estimated gain.
    sc = ctx.scenario
    p_t = ctx.training_powers
    if ctx.receiver == COHERENT:
        return estimated_gain_mean(sc.channel_variances, p_t, sc.noise_variance)
    err = [amplitude_error_variance(pt / sc.noise_variance, sigma_h2=s2)
           for pt, s2 in zip(p_t, sc.channel_variances)]
    return sc.channel_variances - np.array(err)


def _allocate(spec, point):
    if not 0 <= point < len(spec.grid):
        raise ConfigurationError(f"point must index the grid (0..{len(spec.grid) - 1})")
    ctx = point_context(spec, point)
    r = spec.data_fraction if spec.sweep == "snr" else spec.grid[point]
    g_hat = _mean_gain(ctx) if spec.allocation == CONDITIONAL_J_GRADIENT else None
    res = allocate(spec.allocation, spec.receiver, ctx.scenario, ctx.confusions, g_hat, r)
    return {
        "sweep": spec.sweep,
        "sweep_value": spec.grid[point],
        "strategy": res.solver,
        "receiver": spec.receiver,
        "p_total": res.plan.p_total,
        "data_powers": res.plan.data_powers,
        "training_powers": res.plan.training_powers,
        "objective": res.objective,
        "diagnostics": res.diagnostics,
    }


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "sweep":
            spec = load_config(args.config, trials=args.trials, seed=args.seed)
            points = run_sweep(spec, workers=args.workers)
            out = args.out or spec.output
            write_csv(points, out if out else sys.stdout)
        else:
            spec = load_config(args.config)
            json.dump(_jsonable(_allocate(spec, args.point)), sys.stdout, indent=2)
            sys.stdout.write("\n")
    except (ValueError, OSError) as exc:
        print(f"wsnfusion: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
