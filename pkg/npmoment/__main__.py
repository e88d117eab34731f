""" Command-line interface

Usage:

    npmoment synth --kind linear-embedding --n 20000 --D 20 --d 2 --mean logistic3 --seed 7 --out data.csv
    npmoment weights --data data.csv --covariates x0..x19 --outcome y --x 0.1,... --s 200 --k 2
    npmoment estimate --data data.csv --covariates x0..x19 --outcome y --x 0.1,... --moment regression --k 1 --adaptive
    npmoment ci --data data.csv --covariates x0..x19 --outcome y --x 0.1,... --moment regression --k 1 --gamma 0.98 --adaptive --zeta 0.1
    npmoment adapt --data data.csv --covariates x0..x19 --outcome y --x 0.1,... --k 1 --zeta 0.1 --trace trace.csv
    npmoment zeta 3
    npmoment experiment coverage --config inputs/coverage-desk.json --out-dir output/coverage

(or python3 -m npmoment ...). Results go to standard output, messages to
standard error. Exit status is 2 for bad input or configuration and 3 for
a numerical failure.

"""

import argparse, logging, os, sys

from .common import *
from . import adaptive, combinatorics, dataset, harness, inference, knn_weights, moments, solver, synth

logger = logging.getLogger(__name__)


#
# Shared arguments
#

def add_data_arguments (parser):
    parser.add_argument("--data", required=True, help="CSV or JSON data file")
    parser.add_argument("--covariates", help="covariate columns, e.g. x0..x19")
    parser.add_argument("--outcome", help="outcome column(s)")
    parser.add_argument("--treatment", help="treatment column(s)")
    parser.add_argument("--instrument", help="instrument column")
    parser.add_argument("--x", required=True, help="target point, e.g. 0.1,0.2 or a JSON array")


def add_size_arguments (parser, adaptive=True):
    parser.add_argument("--k", type=int, default=1)
    if adaptive:
        group = parser.add_mutually_exclusive_group()
        group.add_argument("--s", type=int, help="sub-sample size")
        group.add_argument("--adaptive", action="store_true", help="pick s from the data")
    else:
        parser.add_argument("--s", type=int, help="sub-sample size")
    parser.add_argument("--Delta", type=float, help="diameter bound (default: bounding-box diagonal)")
    parser.add_argument("--exact-scan", action="store_true", help="evaluate H(s) at every s")
    parser.add_argument("--mode", choices=WEIGHT_MODES, default="complete")
    parser.add_argument("--B", type=int, help="number of sub-samples in incomplete mode")
    parser.add_argument("--seed", type=int, default=0)


def read_data (args):
    schema = None
    if args.covariates:
        schema = dataset.make_schema(args.covariates, args.outcome, args.treatment, args.instrument)
    return dataset.load_dataset(args.data, schema)


def require_size (args):
    """ Either a fixed s or an explicit --adaptive """
    if args.s is None and not args.adaptive:
        raise PreconditionException("give --s or --adaptive")


#
# Subcommands
#

def do_synth (args):
    spec = synth.GeneratorSpec(
        kind=args.kind, D=args.D, d=args.d, n=args.n, noise_sd=args.noise_sd,
        mean_function=args.mean, mean_constant=args.constant, rng=RngSpec(args.seed),
    )
    data, truth = synth.generate(spec)
    dataset.write_csv(data, args.out)
    sidecar = os.path.splitext(args.out)[0] + ".json"
    synth.write_sidecar(sidecar, spec, truth, synth.sample_test_points(truth.spec, args.test_points))
    logger.info("Wrote {} observations to {} and {}".format(data.n, args.out, sidecar))


def do_weights (args):
    data = read_data(args)
    ranking = knn_weights.rank_by_distance(data, parse_vector(args.x))
    if args.s is None:
        raise PreconditionException("weights needs --s")
    weights = knn_weights.make_weights(ranking, args.s, args.k, args.mode, args.B, RngSpec(args.seed))
    weights.to_frame().to_csv(sys.stdout, index=False)


def do_estimate (args):
    require_size(args)
    data = read_data(args)
    x = parse_vector(args.x)
    moment = moments.moment_by_name(args.moment)
    moment.check(data)
    ranking = knn_weights.rank_by_distance(data, x)
    selection = None
    s = args.s
    if args.adaptive:
        delta = args.delta if args.delta is not None else 1.0 / data.n
        selection = adaptive.select_s_estimation(
            data, x, args.k, moment.dimension(data), delta, args.Delta, args.exact_scan, ranking
        )
        s = selection.s_star
    weights = knn_weights.make_weights(ranking, s, args.k, args.mode, args.B, RngSpec(args.seed), inference=False)
    result = solver.solve(weights, data, moment)
    dump_json({
        "theta": result.theta_hat,
        "residual": result.residual_norm,
        "iterations": result.iterations,
        "method": result.method,
        "s_used": s,
        "k": args.k,
        "adaptive": None if selection is None else selection.to_dict(),
    })


def do_ci (args):
    require_size(args)
    data = read_data(args)
    result = inference.local_inference(
        data, parse_vector(args.x), moments.moment_by_name(args.moment), args.k,
        s=args.s,
        gamma=args.gamma,
        zeta_exponent=args.zeta,
        Delta=args.Delta,
        mode=args.mode,
        B=args.B,
        rng=RngSpec(args.seed),
        m_neighbors=args.neighbors,
        density=args.density,
        exact_scan=args.exact_scan,
        finite_sample=args.finite_sample,
    )
    output = result.to_dict()
    output["adaptive"] = None if result.adaptive is None else result.adaptive.to_dict()
    dump_json(output)


def do_adapt (args):
    data = read_data(args)
    x = parse_vector(args.x)
    ranking = knn_weights.rank_by_distance(data, x)
    p = args.p
    if p is None:
        p = moments.moment_by_name(args.moment).dimension(data)
    if args.delta is not None:
        selection = adaptive.select_s_estimation(data, x, args.k, p, args.delta, args.Delta, args.exact_scan, ranking)
    else:
        selection = adaptive.select_s_inference(data, x, args.k, p, args.zeta, args.Delta, args.exact_scan, ranking)

    output = selection.to_dict()
    try:
        output["d_hat"] = adaptive.estimate_intrinsic_dimension(data, x, args.k, ranking=ranking)
    except (DiagnosticException, PreconditionException) as e:
        logger.warning("no intrinsic dimension estimate: {}".format(e))
        output["d_hat"] = None
    if args.trace:
        selection.trace_frame().to_csv(args.trace, index=False)
    dump_json(output)


def do_zeta (args):
    value = combinatorics.zeta(args.k, exact=True)
    output = {"k": args.k, "zeta": str(value), "value": float(value)}
    if args.s is not None:
        sequences = combinatorics.incrementality_sequences(args.k, args.s)
        output.update(s=args.s, ratio_sum=sequences.ratio_sum, eta=combinatorics.incrementality(args.k, args.s))
    dump_json(output)


def do_experiment (args):
    config = harness.load_config(args.config)
    harness.run_experiment(args.experiment, config, args.out_dir)


#
# Parser
#

def make_parser ():
    parser = argparse.ArgumentParser(prog="npmoment", description="Sub-sampled k-NN estimation of conditional moment models")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debugging")
    commands = parser.add_subparsers(dest="command", required=True)

    command = commands.add_parser("synth", help="generate a synthetic dataset")
    command.add_argument("--kind", choices=GENERATOR_KINDS, default="linear-embedding")
    command.add_argument("--n", type=int, default=1000)
    command.add_argument("--D", type=int, default=20)
    command.add_argument("--d", type=int, default=2)
    command.add_argument("--mean", choices=MEAN_FUNCTIONS, default="logistic3")
    command.add_argument("--constant", type=float, default=0.0)
    command.add_argument("--noise-sd", type=float, default=1.0)
    command.add_argument("--seed", type=int, default=0)
    command.add_argument("--test-points", type=int, default=1)
    command.add_argument("--out", required=True)
    command.set_defaults(action=do_synth)

    command = commands.add_parser("weights", help="print sub-sampled k-NN weights as CSV")
    add_data_arguments(command)
    add_size_arguments(command, adaptive=False)
    command.set_defaults(action=do_weights)

    command = commands.add_parser("estimate", help="estimate theta(x)")
    add_data_arguments(command)
    add_size_arguments(command)
    command.add_argument("--moment", default="regression", help="regression | quantile:<alpha> | het_effect | iv")
    command.add_argument("--delta", type=float, help="confidence parameter for the adaptive s (default 1/n)")
    command.set_defaults(action=do_estimate)

    command = commands.add_parser("ci", help="estimate theta(x) with a confidence interval")
    add_data_arguments(command)
    add_size_arguments(command)
    command.add_argument("--moment", default="regression")
    command.add_argument("--gamma", type=float, default=0.98)
    command.add_argument("--zeta", type=float, default=0.1)
    command.add_argument("--neighbors", type=int, help="neighbours for the local variance (default ceil(sqrt(n)))")
    command.add_argument("--density", type=float, help="conditional density at the solution (quantile moments)")
    command.add_argument("--finite-sample", action="store_true", help="use the exact finite-s variance constant")
    command.set_defaults(action=do_ci)

    command = commands.add_parser("adapt", help="pick s from the data")
    add_data_arguments(command)
    command.add_argument("--k", type=int, default=1)
    command.add_argument("--p", type=int, help="parameter dimension (default: from --moment)")
    command.add_argument("--moment", default="regression")
    group = command.add_mutually_exclusive_group()
    group.add_argument("--delta", type=float)
    group.add_argument("--zeta", type=float, default=0.1)
    command.add_argument("--Delta", type=float)
    command.add_argument("--exact-scan", action="store_true")
    command.add_argument("--trace", help="write the (s, H, G) trace to this CSV file")
    command.set_defaults(action=do_adapt)

    command = commands.add_parser("zeta", help="print zeta_k (and the incrementality at s)")
    command.add_argument("k", type=int)
    command.add_argument("s", type=int, nargs="?")
    command.set_defaults(action=do_zeta)

    command = commands.add_parser("experiment", help="run a Monte Carlo experiment")
    command.add_argument("experiment", choices=harness.EXPERIMENTS)
    command.add_argument("--config", required=True)
    command.add_argument("--out-dir", required=True)
    command.set_defaults(action=do_experiment)

    return parser


def main (argv=None):
    args = make_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        args.action(args)
    except ConfigException as e:
        print("npmoment: {}".format(e), file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except NumericalException as e:
        print("npmoment: {}".format(e), file=sys.stderr)
        return EXIT_NUMERICAL_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())

# end
