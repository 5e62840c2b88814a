#  Copyright (C) 2026 st-stickbreaking developers
#
#  This program is free software; you can redistribute it and/or
#  modify it under the terms of the GNU Lesser General Public
#  License as published by the Free Software Foundation; either
#  version 2 of the License, or (at your option) any later version.
#
#  This library is distributed in the hope that it will be useful,
#  but WITHOUT ANY WARRANTY; without even the implied warranty of
#  MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the GNU
#  Lesser General Public License for more details.
#
#  You should have received a copy of the GNU Lesser General Public
#  License along with this library. If not, see <http://www.gnu.org/licenses/>.

"""
cli - the ``stsb`` command
==========================

Subcommands:

``simulate``
  Generate a synthetic dataset and its 70/30 split
  (``data.csv``, ``train.csv``, ``test.csv``).

``fit``
  Run one or more chains on a dataset (``trace.csv`` or
  ``trace-<j>.csv`` per chain, ``summary.csv``).

``predict``
  Posterior predictive summaries at the points of a CSV
  (``predictions.csv``).

``score``
  Squared prediction error of predictions against a dataset
  (``score.csv``, ``residuals.csv``).

``covariance``
  Kernel ratio, co-clustering and covariance against spatial distance
  and time lag under the prior (``covariance.csv``).

``clusters``
  Expected number of occupied components against sample size
  (``clusters.csv``).

``weights``
  Component weights of one prior draw over a grid (``weights.csv``).

``density``
  Posterior predictive density curve at one point (``density.csv``).

Every command writes ``manifest.txt`` to the output directory last.
Errors are reported as ``stsb: <command>: <message>`` with exit status 1.
Usage errors, including bad option values and configuration keys found
after parsing, exit with status 2.
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__
from ._exceptions import BadValue, ConfigError, StsbError
from .core import (
    ConfigValueError,
    HyperPriors,
    McmcConfig,
    SpaceTimeDomain,
    SpaceTimePoint,
    make_rng,
)
from .datagen import (
    MODELS,
    FIELD_MODES,
    scenario_regime,
    simulate_model,
    train_test_split,
)
from .gp_atoms import run_chain_va
from .io import (
    RunManifest,
    load_csv,
    parse_config,
    read_manifest,
    read_trace,
    write_dataset_csv,
    write_predictions,
    write_table,
    write_trace,
    read_predictions,
)
from .kernels import KernelHyper, KernelKind
from .mcmc import (
    pool_traces,
    pr_lambda_zero,
    run_chain,
    run_chains,
    summarise_trace,
)
from .predict_eval import (
    align_predictions,
    espe,
    posterior_predictive,
    predictive_density,
    residual_map,
)
from .stickbreak import (
    PriorConfig,
    coclustering_closed_form,
    expected_cluster_count,
    g_mc,
    g_quadrature,
    marginal_covariance,
    sample_prior_config,
    weight_map,
)

LOGGER = logging.getLogger(__name__)

PROG = "stsb"
MANIFEST = "manifest.txt"
LOG_FORMAT = "[%(asctime)s] %(levelname)-7s %(name)s: %(message)s"


def _bounded_int(text, minimum):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            "expected an integer, got {!r}".format(text)
        ) from None
    if value < minimum:
        raise argparse.ArgumentTypeError(
            "must be >= {}, got {}".format(minimum, value)
        )
    return value


def _positive_int(text):
    return _bounded_int(text, 1)


def _nonnegative_int(text):
    return _bounded_int(text, 0)


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            "expected comma separated integers, got {!r}".format(text)
        ) from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError(
            "expected positive integers, got {!r}".format(text)
        )
    return values


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            "expected comma separated numbers, got {!r}".format(text)
        ) from None


def _kernel(text):
    try:
        return KernelKind.from_name(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _common_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="Random seed")
    common.add_argument("--config", help="Configuration file (key=value)")
    common.add_argument(
        "--threads", type=_positive_int, help="Maximum worker threads"
    )
    common.add_argument(
        "--out-dir", default=".", help="Output directory (default: .)"
    )
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument(
        "-v", "--verbose", action="store_true", help="Debug logging"
    )
    verbosity.add_argument(
        "-q", "--quiet", action="store_true", help="Warnings and errors only"
    )
    return common


def _add_kernel_args(parser):
    parser.add_argument(
        "--kernel", type=_kernel, default=KernelKind.GNEITING,
        help="separable, gneiting or constant (default: gneiting)",
    )
    parser.add_argument("--gamma", type=float, default=1.0)
    parser.add_argument("--lambda", dest="lam", type=float, default=0.0)
    parser.add_argument("--h1", type=float, default=0.25)
    parser.add_argument("--h2", type=float, default=0.25)
    parser.add_argument("--h-t", dest="h_t", type=float, default=2.0)
    parser.add_argument("--a", type=float, default=1.0)
    parser.add_argument("--b", type=float, default=1.0)
    parser.add_argument(
        "--T",
        dest="T",
        type=_positive_int,
        default=24,
        help="Number of time points",
    )


def build_parser():
    # pylint: disable=too-many-statements
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Space-time stick-breaking mixtures: simulate, fit, "
        "predict and score.",
    )
    parser.add_argument(
        "--version", action="version", version="%(prog)s " + __version__
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    common = _common_parser()

    p = sub.add_parser("simulate", parents=[common], help="Simulate data")
    p.add_argument(
        "--model",
        default="scenario41",
        choices=["scenario41"] + sorted(MODELS),
    )
    p.add_argument(
        "--n",
        type=_positive_int,
        help="Locations per time point (scenario41, default 200) or the "
        "maximum number of locations (Thomas-process models)",
    )
    p.add_argument(
        "--T", dest="T", type=_positive_int,
        help="Time points (default 24 for scenario41, 15 otherwise)",
    )
    p.add_argument("--omega", type=float, default=10.0)
    p.add_argument("--delta", type=float, default=10.0)
    p.add_argument("--radius", type=float, default=0.1)
    p.add_argument("--mode", choices=FIELD_MODES)
    p.add_argument("--rho", type=float, default=0.2)
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="Fit a model")
    p.add_argument("--data", required=True, help="Dataset CSV")
    p.add_argument("--kernel", type=_kernel)
    p.add_argument("--chains", type=_positive_int, default=1)
    p.add_argument(
        "--varying-atoms", action="store_true", default=None,
        help="Fit the varying-atoms model",
    )
    p.add_argument("--n-iter", type=_positive_int)
    p.add_argument("--n-burn", type=_nonnegative_int)
    p.add_argument("--thin", type=_positive_int)
    p.add_argument("--truncation", type=_positive_int)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[common], help="Predict")
    p.add_argument(
        "--trace", action="append", required=True,
        help="Trace CSV; repeat to pool chains",
    )
    p.add_argument(
        "--manifest", help="Manifest of the fit (default: next to the trace)"
    )
    p.add_argument("--points", required=True, help="Points CSV")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("score", parents=[common], help="Score predictions")
    p.add_argument("--predictions", required=True)
    p.add_argument("--truth", required=True, help="Dataset CSV")
    p.add_argument(
        "--window",
        type=_positive_int,
        help="Average residuals over this many times",
    )
    p.set_defaults(func=cmd_score)

    p = sub.add_parser(
        "covariance", parents=[common], help="Prior covariance table"
    )
    _add_kernel_args(p)
    p.add_argument("--atom-var", type=float, default=1.0)
    p.add_argument("--max-dist", type=float, default=0.5)
    p.add_argument("--n-dist", type=_positive_int, default=11)
    p.add_argument("--max-lag", type=_nonnegative_int, default=5)
    p.add_argument("--nodes", type=_positive_int, default=32)
    p.add_argument(
        "--mc", type=_nonnegative_int, default=0,
        help="Also estimate g with this many Monte Carlo knots",
    )
    p.set_defaults(func=cmd_covariance)

    p = sub.add_parser(
        "clusters", parents=[common], help="Expected cluster counts"
    )
    _add_kernel_args(p)
    p.add_argument("--truncation", type=_positive_int, default=100)
    p.add_argument(
        "--n-points", type=_int_list, default=[10, 50, 100, 200, 500]
    )
    p.add_argument("--reps", type=_positive_int, default=100)
    p.set_defaults(func=cmd_clusters)

    p = sub.add_parser("weights", parents=[common], help="Weight maps")
    _add_kernel_args(p)
    p.add_argument("--truncation", type=_positive_int, default=100)
    p.add_argument("--grid", type=_positive_int, default=21)
    p.add_argument("--times", type=_int_list, default=[1])
    p.add_argument("--components", type=_int_list, default=[1, 2, 3, 4])
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser(
        "density", parents=[common], help="Predictive density curve"
    )
    p.add_argument("--trace", action="append", required=True)
    p.add_argument("--manifest")
    p.add_argument("--s1", type=float, required=True)
    p.add_argument("--s2", type=float, required=True)
    p.add_argument("--t", type=_positive_int, required=True)
    p.add_argument("--x", type=_float_list, help="Covariates, comma separated")
    p.add_argument("--y-min", type=float)
    p.add_argument("--y-max", type=float)
    p.add_argument("--n-grid", type=_positive_int, default=200)
    p.set_defaults(func=cmd_density)

    return parser


def _configure_logging(args):
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(
        level=level, format=LOG_FORMAT, stream=sys.stderr, force=True
    )


def _out(args, name):
    return os.path.join(args.out_dir, name)


def _seed(args, config=None):
    if args.seed is not None:
        return args.seed
    if config is not None and config.seed is not None:
        return config.seed
    return int(np.random.SeedSequence().entropy)


# _resolve_config():
#
# Defaults, then the --config file, then explicit flags.
#
def _resolve_config(args, **flags):
    if args.config:
        hyper, config = parse_config(args.config)
    else:
        hyper, config = HyperPriors(), McmcConfig()
    changes = {k: v for k, v in flags.items() if v is not None}
    if args.threads is not None:
        changes["threads"] = args.threads
    changes["seed"] = _seed(args, config)
    try:
        config = config.replace(**changes)
    except ConfigValueError as e:
        raise BadValue(e.key, changes.get(e.key), str(e)) from e
    return hyper, config


def _manifest(args, seed=None):
    return RunManifest(command=args.command, version=__version__, seed=seed)


def _finish(args, manifest, outputs):
    for path in outputs:
        manifest.add_output(path)
    manifest.write(_out(args, MANIFEST))


def cmd_simulate(args):
    seed = _seed(args)
    rng = make_rng(seed)
    manifest = _manifest(args, seed)
    if args.model == "scenario41":
        data = scenario_regime(args.n or 200, args.T or 24, args.rho, rng)
        mode = "regime"
    else:
        data, mode = simulate_model(
            args.model,
            args.T or 15,
            rng,
            omega=args.omega,
            delta=args.delta,
            radius=args.radius,
            max_locations=args.n,
            mode=args.mode,
        )
    train, test = train_test_split(data, args.train_fraction, rng)

    outputs = []
    parts = (("data.csv", data), ("train.csv", train), ("test.csv", test))
    for name, part in parts:
        path = _out(args, name)
        write_dataset_csv(path, part)
        outputs.append(path)
    manifest.domain = data.domain
    manifest.extra.update(
        {"model": args.model, "mode": mode, "n_observations": data.n}
    )
    _finish(args, manifest, outputs)
    LOGGER.info(
        "Simulated %d observations (%d train, %d test)",
        data.n,
        train.n,
        test.n,
    )


def cmd_fit(args):
    data = load_csv(args.data)
    hyper, config = _resolve_config(
        args,
        kernel=args.kernel,
        varying_atoms=args.varying_atoms,
        n_iter=args.n_iter,
        n_burn=args.n_burn,
        thin=args.thin,
        truncation=args.truncation,
    )
    manifest = _manifest(args, config.seed)
    manifest.set_config(hyper, config)
    manifest.domain = data.domain
    manifest.n_covariates = data.p

    chain_fn = run_chain_va if config.varying_atoms else run_chain
    if args.chains == 1:
        traces = [chain_fn(data, config, hyper, make_rng(config.seed))]
    else:
        traces = run_chains(
            data, config, hyper, args.chains, config.seed, chain_fn=chain_fn
        )

    outputs = []
    for j, trace in enumerate(traces, start=1):
        name = "trace.csv" if len(traces) == 1 else "trace-{}.csv".format(j)
        path = _out(args, name)
        write_trace(path, trace)
        outputs.append(path)
        for key, rate in sorted(trace.acceptance.items()):
            name = "acceptance.{}.{}".format(j, key)
            manifest.extra[name] = "{:.4f}".format(rate)

    pooled = pool_traces(traces)
    summary = summarise_trace(pooled)
    path = _out(args, "summary.csv")
    write_table(
        path,
        ["param", "mean", "sd", "q05", "q50", "q95"],
        (
            [name] + [s[k] for k in ("mean", "sd", "q05", "q50", "q95")]
            for name, s in summary.items()
        ),
    )
    outputs.append(path)

    manifest.extra["chains"] = len(traces)
    if config.kernel is not KernelKind.SEPARABLE:
        pr_zero, mean_nonzero = pr_lambda_zero(pooled)
        manifest.extra["pr_lambda_zero"] = "{:.6f}".format(pr_zero)
        manifest.extra["mean_lambda_nonzero"] = "{:.6f}".format(mean_nonzero)
        LOGGER.info(
            "Pr(lambda = 0 | y) = %.4f, E[lambda | y, lambda > 0] = %.4f",
            pr_zero,
            mean_nonzero,
        )
    _finish(args, manifest, outputs)


def _load_traces(args):
    manifest_path = args.manifest or os.path.join(
        os.path.dirname(os.path.abspath(args.trace[0])), MANIFEST
    )
    fit_manifest = read_manifest(manifest_path)
    return pool_traces(read_trace(path, fit_manifest) for path in args.trace)


def cmd_predict(args):
    trace = _load_traces(args)
    points = load_csv(args.points)
    seed = _seed(args, trace.config)
    manifest = _manifest(args, seed)
    result = posterior_predictive(
        trace, points.points, points.covariates, rng=make_rng(seed)
    )
    path = _out(args, "predictions.csv")
    write_predictions(path, result)
    manifest.extra["n_points"] = len(result)
    _finish(args, manifest, [path])


def cmd_score(args):
    truth = load_csv(args.truth)
    pred = align_predictions(read_predictions(args.predictions), truth.points)
    n_scored = int(np.count_nonzero(truth.observed))
    total, mean = espe(pred, truth.y)
    manifest = _manifest(args)
    rows = residual_map(pred, truth.y, truth.points, window=args.window)

    score_path = _out(args, "score.csv")
    write_table(
        score_path, ["n", "espe_sum", "espe_mean"], [[n_scored, total, mean]]
    )
    residual_path = _out(args, "residuals.csv")
    write_table(
        residual_path,
        ["s1", "s2", "t", "sq_residual", "count"],
        ([r.s1, r.s2, int(r.t), r.value, int(r.count)] for r in rows),
    )
    manifest.extra.update({"espe_sum": repr(total), "espe_mean": repr(mean)})
    _finish(args, manifest, [score_path, residual_path])
    print("ESPE sum={:.6g} mean={:.6g} n={}".format(total, mean, n_scored))


def _kernel_hyper(args):
    if args.kernel is KernelKind.SEPARABLE:
        return KernelHyper(
            gamma=args.gamma, lam=args.lam, h=(args.h1, args.h2), h_t=args.h_t
        )
    return KernelHyper(gamma=args.gamma, lam=args.lam)


def _prior_config(args, truncation=100):
    try:
        return PriorConfig(
            domain=_unit_domain(args.T),
            truncation=truncation,
            a=args.a,
            b=args.b,
            kind=args.kernel,
            kernel=_kernel_hyper(args),
        )
    except ValueError as e:
        raise BadValue("prior", "", str(e)) from e


def _unit_domain(T):
    return SpaceTimeDomain.unit(T)


def cmd_covariance(args):
    # pylint: disable=too-many-locals
    seed = _seed(args)
    manifest = _manifest(args, seed)
    T = max(args.T, args.max_lag + 1)
    domain = _unit_domain(T)
    hyper = _kernel_hyper(args)
    s = (0.5, 0.5)
    dists = np.linspace(0.0, args.max_dist, args.n_dist)
    others = np.column_stack([0.5 + dists, np.full_like(dists, 0.5)])
    rng = make_rng(seed)

    header = ["dist", "lag", "g", "coclustering", "covariance"]
    if args.mc:
        header += ["g_mc", "g_mc_se"]
    rows = []
    for lag in range(args.max_lag + 1):
        g = g_quadrature(
            args.kernel,
            hyper,
            domain,
            s,
            others,
            1,
            np.full(len(dists), 1 + lag),
            n_nodes=args.nodes,
        )
        for j, d in enumerate(dists):
            g_j = min(max(float(g[j]), 0.0), 1.0)
            row = [
                d,
                lag,
                g_j,
                coclustering_closed_form(args.a, args.b, g_j),
                marginal_covariance(args.a, args.b, g_j, args.atom_var),
            ]
            if args.mc:
                row += list(
                    g_mc(
                        args.kernel,
                        hyper,
                        domain,
                        s,
                        others[j],
                        1,
                        1 + lag,
                        args.mc,
                        rng,
                    )
                )
            rows.append(row)

    path = _out(args, "covariance.csv")
    write_table(path, header, rows)
    manifest.domain = domain
    manifest.extra.update(
        {"kernel": str(args.kernel), "gamma": args.gamma, "lambda": args.lam}
    )
    _finish(args, manifest, [path])


def cmd_clusters(args):
    seed = _seed(args)
    manifest = _manifest(args, seed)
    config = _prior_config(args, args.truncation)
    rows = []
    for n_points in args.n_points:
        mean, counts = expected_cluster_count(
            config, n_points, args.reps, make_rng(seed), return_counts=True
        )
        sd = float(counts.std(ddof=1)) if len(counts) > 1 else 0.0
        rows.append([n_points, mean, sd])
        LOGGER.info("n=%d: %.3f expected clusters", n_points, mean)
    path = _out(args, "clusters.csv")
    write_table(path, ["n_points", "mean", "sd"], rows)
    manifest.domain = config.domain
    manifest.extra.update({"kernel": str(args.kernel), "reps": args.reps})
    _finish(args, manifest, [path])


def cmd_weights(args):
    seed = _seed(args)
    manifest = _manifest(args, seed)
    config = _prior_config(args, args.truncation)
    draw = sample_prior_config(config, make_rng(seed))
    axis = np.linspace(0.0, 1.0, args.grid)
    g1, g2 = np.meshgrid(axis, axis, indexing="ij")
    grid = np.column_stack([g1.ravel(), g2.ravel()])
    coords = np.tile(grid, (len(args.times), 1))
    times = np.repeat(np.asarray(args.times, dtype=int), len(grid))
    try:
        wm = weight_map(draw.sticks, coords, times, args.components)
    except ValueError as e:
        raise BadValue("components", args.components, str(e)) from e
    rows = (
        [s[0], s[1], int(t)] + list(w) + [r]
        for s, t, w, r in zip(coords, times, wm.pi, wm.remainder)
    )
    path = _out(args, "weights.csv")
    write_table(
        path,
        ["s1", "s2", "t"]
        + ["w{}".format(k) for k in wm.components]
        + ["remainder"],
        rows,
    )
    manifest.domain = config.domain
    manifest.extra["kernel"] = str(args.kernel)
    _finish(args, manifest, [path])


def cmd_density(args):
    trace = _load_traces(args)
    seed = _seed(args, trace.config)
    manifest = _manifest(args, seed)
    point = SpaceTimePoint(args.s1, args.s2, args.t)
    covariates = None if args.x is None else np.array([args.x])
    lo, hi = args.y_min, args.y_max
    if lo is None or hi is None:
        pred = posterior_predictive(
            trace, [point], covariates, rng=make_rng(seed), quantiles=False
        )
        centre, spread = float(pred.mean[0]), 6.0 * float(pred.sd[0])
        lo = centre - spread if lo is None else lo
        hi = centre + spread if hi is None else hi
    grid = np.linspace(lo, hi, args.n_grid)
    density = predictive_density(
        trace, point, grid, covariates, rng=make_rng(seed)
    )
    path = _out(args, "density.csv")
    write_table(path, ["y", "density"], zip(grid, density))
    _finish(args, manifest, [path])


# run_cli():
#
# Run one command.
#
# Args:
#    argv (list): Arguments without the program name, sys.argv by default
#
# Returns:
#    (int): 0 on success, 1 on a runtime error, 2 on a usage or
#           configuration error
#
def run_cli(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    _configure_logging(args)
    try:
        os.makedirs(args.out_dir, exist_ok=True)
        args.func(args)
    except ConfigError as e:
        print("{}: {}: {}".format(PROG, args.command, e), file=sys.stderr)
        return 2
    except (StsbError, OSError, ValueError) as e:
        print("{}: {}: {}".format(PROG, args.command, e), file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run_cli())
