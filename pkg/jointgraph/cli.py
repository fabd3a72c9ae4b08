import sys
import json
import argparse
import numpy as np

from jointgraph import __version__ as jointgraph_version
from jointgraph import config
from jointgraph.baselines import KMeans, SymNMF
from jointgraph.datasets import load_dataset, make_blobs, write_csv
from jointgraph.experiment import Experiment, emit_comparisons, emit_grid, emit_summary, emit_trace
from jointgraph.graph import GraphConfig, build_affinity
from jointgraph.metrics import evaluate
from jointgraph.solver import JointSolver, export_matrices, similarity_agreement
from jointgraph.utils import (ConfigError, InputError, NumericalError, ShapeError, setup_logger,
                              _convert_to_int, _convert_to_list)


class _Parser(argparse.ArgumentParser):
    """ ArgumentParser exiting with code 1 on usage errors. """

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


###############################################################################
# ------------------------------- Arguments --------------------------------- #
###############################################################################

def _add_data_arguments(parser):
    group = parser.add_argument_group("Data")
    group.add_argument("--data", metavar="<path>", help="Path to a CSV file with one sample per row, or a builtin dataset ('iris', 'wine').")
    group.add_argument("--labels", metavar="last/none/<path>", help="Where the labels are: the last column of each row (default), none, or a file with one label per line.")
    group.add_argument("--header", help="Skip the first line of the data file (Default: False).", action="store_true", default=None)
    group.add_argument("--standardize", help="Scale every feature to mean 0 and unit variance (Default: False).", action="store_true", default=None)
    group.add_argument("--unit-scale", help="Divide the data by its largest singular value (Default: False).", action="store_true", default=None)


def _add_graph_arguments(parser):
    group = parser.add_argument_group("Graph")
    group.add_argument("--p", metavar="<int>", type=int, help="Number of nearest neighbors (Default: floor(log2(n) + 1)).")
    group.add_argument("--weighting", choices=config.weightings, help="Edge weights of the neighbor graph (Default: rbf).")
    group.add_argument("--normalization", choices=config.normalizations, help="Degree normalization of the graph (Default: symmetric).")


def _add_solver_arguments(parser):
    group = parser.add_argument_group("Solver")
    group.add_argument("--clusters", metavar="<int>", type=int, help="Number of clusters (Default: number of label classes).")
    group.add_argument("--tol", metavar="<float>", type=float, help=f"Stopping tolerance (Default: {config.tolerance}).")
    group.add_argument("--max-iter", metavar="<int>", type=int, help=f"Maximum number of iterations (Default: {config.max_iter}; k-means: {config.kmeans_max_iter}).")
    group.add_argument("--seed", metavar="<int>", type=int, help="Random seed (Default: 0).")


def _add_experiment_arguments(parser):
    group = parser.add_argument_group("Experiment")
    group.add_argument("--config", metavar="<path>", help="Path to an experiment configuration in json format. Explicit flags overwrite its values.")
    group.add_argument("--trials", metavar="<int>", type=int, help=f"Number of seeded trials per method (Default: {config.trials}).")
    group.add_argument("--alphas", metavar="<list>", help="Comma-separated alpha grid (Default: 0.01,0.1,1,10,100,1000).")
    group.add_argument("--betas", metavar="<list>", help="Comma-separated beta grid (Default: 0.01,0.1,1,10,100,1000).")
    group.add_argument("--n-jobs", metavar="<int>", type=int, default=1, help="Number of threads running trials (Default: 1).")


def _add_output_arguments(parser, required=False):
    group = parser.add_argument_group("Output")
    group.add_argument("--out", metavar="<path>", required=required, help="Path of the output file.")
    group.add_argument("--format", choices=["csv", "json"], help="Format of the output file (Default: taken from the file extension, csv otherwise).")


def _build_parser():

    parser = _Parser("jointgraph", description="Clustering with a jointly learned similarity graph and membership matrix.")
    parser.add_argument("--version", action="version", version=jointgraph_version)
    subparsers = parser.add_subparsers(dest="command", parser_class=_Parser)

    verbosity = argparse.ArgumentParser(add_help=False)
    verbosity.add_argument("--verbosity", metavar="0/1/2", help="Verbosity level for logging (0-2). 0 = only errors and warnings, 1 = minimal logging, 2 = debug logging (Default: 1).", type=int, default=1)

    # cluster
    cluster = subparsers.add_parser("cluster", parents=[verbosity], help="Cluster one dataset with one method and print the metrics.")
    _add_data_arguments(cluster)
    _add_graph_arguments(cluster)
    _add_solver_arguments(cluster)
    cluster.add_argument("--method", choices=config.methods, default="joint", help="Clustering method (Default: joint).")
    cluster.add_argument("--alpha", metavar="<float>", type=float, default=1.0, help="Weight of the self-expression term (Default: 1).")
    cluster.add_argument("--beta", metavar="<float>", type=float, default=1.0, help="Weight of the prior graph term (Default: 1).")
    cluster.add_argument("--out", metavar="<path>", help="Write the predicted labels, one per line.")
    cluster.add_argument("--trace", metavar="<path>", help="Write the per-iteration objective and changes as CSV (joint and symnmf).")
    cluster.add_argument("--export-matrices", metavar="<prefix>", help="Save W, S and VV^T rescaled to [0, 1] as .npy files (joint only).")

    # grid
    grid = subparsers.add_parser("grid", parents=[verbosity], help="Grid search over alpha and beta for the joint method.")
    _add_data_arguments(grid)
    _add_graph_arguments(grid)
    _add_solver_arguments(grid)
    _add_experiment_arguments(grid)
    _add_output_arguments(grid)

    # bench
    bench = subparsers.add_parser("bench", parents=[verbosity], help="Repeated trials of several methods with significance tests.")
    _add_data_arguments(bench)
    _add_graph_arguments(bench)
    _add_solver_arguments(bench)
    _add_experiment_arguments(bench)
    bench.add_argument("--methods", metavar="<list>", help="Comma-separated methods (Default: joint,symnmf,kmeans).")
    _add_output_arguments(bench)

    # synth
    synth = subparsers.add_parser("synth", parents=[verbosity], help="Write Gaussian blobs to a CSV file.")
    synth.add_argument("--sizes", metavar="<list>", default="50,50,50", help="Comma-separated number of samples per cluster (Default: 50,50,50).")
    synth.add_argument("--dim", metavar="<int>", type=int, default=2, help="Number of features (Default: 2).")
    synth.add_argument("--scale", metavar="<float>", type=float, default=10.0, help="Cluster centers are drawn from [-scale, scale] (Default: 10).")
    synth.add_argument("--noise", metavar="<float>", type=float, default=1.0, help="Standard deviation of the noise (Default: 1).")
    synth.add_argument("--seed", metavar="<int>", type=int, default=0, help="Random seed (Default: 0).")
    synth.add_argument("--out", metavar="<path>", required=True, help="Path of the CSV file.")

    return parser


###############################################################################
# ------------------------------- Commands ---------------------------------- #
###############################################################################

def _data_options(args):
    if args.data is None:
        raise ConfigError("The --data argument is required.")
    return {"data": args.data, "labels": args.labels or "last_column",
            "header": bool(args.header), "standardize": bool(args.standardize),
            "unit_scale": bool(args.unit_scale)}


def _graph_config(args):
    return GraphConfig(p=args.p, weighting=args.weighting or "rbf", normalization=args.normalization or "symmetric")


def run_cluster(args, logger):

    dataset = load_dataset(**_data_options(args))
    n_clusters = args.clusters if args.clusters is not None else dataset.n_clusters
    if n_clusters is None:
        raise ConfigError("The dataset has no labels. Please give the number of clusters with --clusters.")

    tol = args.tol if args.tol is not None else config.tolerance
    default_max_iter = config.kmeans_max_iter if args.method == "kmeans" else config.max_iter
    max_iter = args.max_iter if args.max_iter is not None else default_max_iter
    seed = args.seed if args.seed is not None else 0

    if args.method == "kmeans":
        model = KMeans(k=n_clusters, max_iter=max_iter, seed=seed, verbosity=args.verbosity)
        labels = model.fit_predict(dataset.x)
    else:
        w = build_affinity(dataset.x, _graph_config(args), logger=logger)
        if args.method == "joint":
            model = JointSolver(alpha=args.alpha, beta=args.beta, n_clusters=n_clusters, tol=tol, max_iter=max_iter,
                                seed=seed, verbosity=args.verbosity)
            labels = model.fit_predict(dataset.x, w=w)
        else:
            model = SymNMF(n_clusters=n_clusters, tol=tol, max_iter=max_iter, seed=seed, verbosity=args.verbosity)
            labels = model.fit_predict(w)

    if args.trace:
        if args.method == "kmeans":
            raise ConfigError("Invalid value for 'trace' parameter: k-means does not record an objective trace.")
        emit_trace(model.trace_, args.trace)
        logger.info(f"Wrote trace to '{args.trace}'")

    if args.export_matrices:
        if args.method != "joint":
            raise ConfigError("Invalid value for 'export-matrices' parameter: only the joint method learns a similarity matrix.")
        paths = export_matrices(args.export_matrices, model.affinity_, model.similarity_, model.membership_)
        logger.info(f"Wrote matrices to {paths}")

    if args.out:
        np.savetxt(args.out, labels, fmt="%d")
        logger.info(f"Wrote labels to '{args.out}'")

    if dataset.has_truth:
        output = {"dataset": dataset.name, "method": args.method, **evaluate(labels, dataset.truth).as_dict()}
        if args.method == "joint":
            output["graph_agreement"] = similarity_agreement(model.similarity_, dataset.truth)
        print(json.dumps(output))
    else:
        logger.warning("The dataset has no labels; no metrics are computed.")


def _experiment_config(args, extra=None):
    """ Merge the config file (if any) with the explicitly given flags; flags win. """

    config_dict = {}
    if args.config:
        with open(args.config) as f:
            try:
                config_dict = json.load(f)
            except Exception as e:
                raise ConfigError(f"Error reading config file '{args.config}'. Error was: {e}")

    flags = {"data": args.data, "labels": args.labels, "header": args.header, "standardize": args.standardize,
             "unit_scale": args.unit_scale,
             "p": args.p, "weighting": args.weighting, "normalization": args.normalization,
             "n_clusters": args.clusters, "tol": args.tol, "max_iter": args.max_iter, "base_seed": args.seed,
             "trials": args.trials, "alpha_grid": args.alphas, "beta_grid": args.betas}
    flags.update(extra or {})
    config_dict.update({key: value for key, value in flags.items() if value is not None})

    return config_dict


def run_grid(args, logger):

    experiment = Experiment(verbosity=args.verbosity, n_jobs=args.n_jobs)
    experiment.from_config(_experiment_config(args, extra={"methods": ["joint"]}))

    grid = experiment.grid_search()
    print(json.dumps({"best_alpha": grid.best_alpha, "best_beta": grid.best_beta, **grid.best_cell.mean.as_dict()}))

    if args.out:
        emit_grid(grid, args.out, format=args.format)
        logger.info(f"Wrote grid table to '{args.out}'")


def run_bench(args, logger):

    experiment = Experiment(verbosity=args.verbosity, n_jobs=args.n_jobs)
    experiment.from_config(_experiment_config(args, extra={"methods": args.methods}))

    bench = experiment.bench()
    for comparison in bench.comparisons:
        print(json.dumps({"method_a": comparison.method_a, "method_b": comparison.method_b, "metric": comparison.metric,
                          "verdict": comparison.verdict, "pvalue": comparison.pvalue}))
    if len(bench.comparisons) > 0:
        print(json.dumps({"summary": bench.summary}))

    if args.out:
        experiment.save_report(bench.results, args.out, format=args.format)
        if len(bench.comparisons) > 0:
            stem, _, extension = args.out.rpartition(".")
            path = f"{stem}_comparisons.{extension}" if stem else f"{args.out}_comparisons"
            emit_comparisons(bench.comparisons, path, format=args.format)
            logger.info(f"Wrote comparisons to '{path}'")

            summary_path = f"{stem or args.out}_summary.json"
            emit_summary(bench.summary, summary_path)
            logger.info(f"Wrote summary to '{summary_path}'")


def run_synth(args, logger):

    sizes = _convert_to_list(args.sizes, "sizes", lambda v, name: _convert_to_int(v, name, minimum=1))
    dataset = make_blobs(sizes, args.dim, centers_scale=args.scale, noise_sigma=args.noise, seed=args.seed, logger=logger)
    write_csv(dataset, args.out)
    logger.info(f"Wrote {dataset.n} samples to '{args.out}'")


_commands = {"cluster": run_cluster, "grid": run_grid, "bench": run_bench, "synth": run_synth}


def main():

    parser = _build_parser()

    # If no args, print help
    if len(sys.argv[1:]) == 0:
        parser.print_help()
        sys.exit()

    args = parser.parse_args()
    if args.command is None:
        parser.print_help()
        sys.exit(1)

    try:
        logger = setup_logger("jointgraph", args.verbosity)
    except ValueError as e:
        parser.error(str(e))

    try:
        _commands[args.command](args, logger)

    except ConfigError as e:
        logger.error(e)  # show exception
        sys.exit(1)
    except NumericalError as e:
        logger.error(e)
        sys.exit(3)
    except (InputError, ShapeError, OSError) as e:
        logger.error(e)
        sys.exit(2)

    logger.info("jointgraph finished!")
