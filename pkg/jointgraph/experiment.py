import json
import os
import time
import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from jointgraph import config
from jointgraph.baselines import KMeansConfig, symnmf_solve, _kmeans_runs
from jointgraph.datasets import Dataset, load_dataset
from jointgraph.graph import GraphConfig, build_affinity
from jointgraph.metrics import MetricReport, evaluate, rank_counts, verdict_counts, wilcoxon_rank_sum
from jointgraph.solver import SolverConfig, assign_clusters, solve
from jointgraph.utils import (ConfigError, InputError, NumericalError, setup_logger, _get_logger,
                              _convert_to_int, _convert_to_float, _convert_to_bool, _convert_to_list,
                              _check_option)


###############################################################################
# ------------------------------ Domain types ------------------------------- #
###############################################################################

def _convert_method(value, name):
    return _check_option(str(value).strip(), name, config.methods)


def _convert_grid_value(value, name):
    return _convert_to_float(value, name, minimum=0)


@dataclass
class ExperimentSpec:
    """
    Definition of a repeated-trial experiment on one dataset.

    Parameters
    ----------
    dataset : Dataset
        Must carry ground-truth labels.
    methods : list of str, default ["joint", "symnmf", "kmeans"]
    alpha_grid, beta_grid : list of float, default [0.01, 0.1, 1, 10, 100, 1000]
    trials : int, default 20
    base_seed : int, default 0
        Trial k runs with seed base_seed XOR k.
    graph : GraphConfig, optional
        Prior graph shared by the graph-based methods. Defaults to GraphConfig().
    n_clusters : int, optional
        Defaults to the number of true classes.
    tol : float, default 1e-4
    max_iter : int, default 1000
    """

    dataset: Dataset
    methods: List[str] = field(default_factory=lambda: list(config.methods))
    alpha_grid: List[float] = field(default_factory=lambda: list(config.hyperparameter_grid))
    beta_grid: List[float] = field(default_factory=lambda: list(config.hyperparameter_grid))
    trials: int = config.trials
    base_seed: int = 0
    graph: GraphConfig = field(default_factory=GraphConfig)
    n_clusters: Optional[int] = None
    tol: float = config.tolerance
    max_iter: int = config.max_iter

    def __post_init__(self):

        if not isinstance(self.dataset, Dataset):
            raise ConfigError(f"Invalid value for 'dataset' parameter: expected a Dataset, got {type(self.dataset).__name__}.")

        self.methods = _convert_to_list(self.methods, "methods", _convert_method)
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError(f"Invalid value for 'methods' parameter: '{self.methods}'. Methods must be unique.")

        self.alpha_grid = _convert_to_list(self.alpha_grid, "alpha_grid", _convert_grid_value)
        self.beta_grid = _convert_to_list(self.beta_grid, "beta_grid", _convert_grid_value)
        self.trials = _convert_to_int(self.trials, "trials", minimum=1)
        self.base_seed = _convert_to_int(self.base_seed, "base_seed", minimum=0)
        self.tol = _convert_to_float(self.tol, "tol", minimum=0, strict=True)
        self.max_iter = _convert_to_int(self.max_iter, "max_iter", minimum=1)

        if self.n_clusters is None:
            self.n_clusters = self.dataset.n_clusters
        if self.n_clusters is None:
            raise ConfigError("Invalid value for 'n_clusters' parameter: the dataset has no labels, so the number of clusters must be given.")
        self.n_clusters = _convert_to_int(self.n_clusters, "n_clusters", minimum=2)

    def trial_seed(self, k):
        """ Seed of trial k. """
        return self.base_seed ^ k


@dataclass
class TrialResult:
    """ Outcome of one method in one trial. Failed trials carry a reason and no metrics. """

    method: str
    trial_seed: int
    trial_index: int
    alpha: Optional[float]
    beta: Optional[float]
    metrics: Optional[MetricReport]
    iterations: int = 0
    wall_time_ms: float = 0.0
    failed: bool = False
    reason: Optional[str] = None
    dataset: str = "dataset"


@dataclass
class AggregateRecord:
    dataset: str
    method: str
    alpha: Optional[float]
    beta: Optional[float]
    metric: str
    mean: float
    std: float
    trials: int
    failed: int = 0


@dataclass
class GridCell:
    alpha: float
    beta: float
    results: List[TrialResult]

    @property
    def failed(self):
        return any(r.failed for r in self.results)

    @property
    def mean(self):
        """ Mean MetricReport over the trials, or None for a failed cell. """

        if self.failed:
            return None
        return MetricReport(**{m: float(np.mean([r.metrics[m] for r in self.results])) for m in config.metric_names})


@dataclass
class GridResult:
    best_alpha: float
    best_beta: float
    table: Dict[Tuple[float, float], GridCell]

    @property
    def best_cell(self):
        return self.table[(self.best_alpha, self.best_beta)]


@dataclass
class Comparison:
    method_a: str
    method_b: str
    metric: str
    verdict: str
    pvalue: float
    mean_a: float
    mean_b: float


###############################################################################
# ------------------------------- Operations -------------------------------- #
###############################################################################

def _run_method(method, dataset, w, spec, alpha, beta, k, logger):
    """ Run one method with the seed of trial k and score it. """

    seed = spec.trial_seed(k)
    start = time.perf_counter()

    try:
        if method == "joint":
            cfg = SolverConfig(alpha=alpha, beta=beta, n_clusters=spec.n_clusters, tol=spec.tol,
                               max_iter=spec.max_iter, seed=seed)
            _, v, trace = solve(dataset.x, w, cfg, logger=logger)
            labels, iterations = assign_clusters(v), trace.iterations

        elif method == "symnmf":
            v, trace = symnmf_solve(w, spec.n_clusters, tol=spec.tol, max_iter=spec.max_iter, seed=seed, logger=logger)
            labels, iterations = assign_clusters(v), trace.iterations

        else:
            kmeans_cfg = KMeansConfig(k=spec.n_clusters, seed=seed)
            labels, _, _, iterations = _kmeans_runs(dataset.x, kmeans_cfg, logger=logger)

    except NumericalError as e:
        logger.warning(f"Trial {k} of method '{method}' failed: {e}")
        return TrialResult(method=method, trial_seed=seed, trial_index=k, alpha=alpha, beta=beta, metrics=None,
                           iterations=e.iteration or 0, wall_time_ms=(time.perf_counter() - start) * 1000.0,
                           failed=True, reason=str(e), dataset=dataset.name)

    return TrialResult(method=method, trial_seed=seed, trial_index=k, alpha=alpha, beta=beta,
                       metrics=evaluate(labels, dataset.truth), iterations=iterations,
                       wall_time_ms=(time.perf_counter() - start) * 1000.0, dataset=dataset.name)


def run_trials(spec, alpha=1.0, beta=1.0, n_jobs=1, w=None, logger=None):
    """
    Run every method of the experiment for spec.trials seeded trials and score each run against the truth.

    Parameters
    ----------
    spec : ExperimentSpec
    alpha, beta : float, default 1
        Hyperparameters of the joint method. They are recorded as None for the other methods.
    n_jobs : int, default 1
        Number of worker threads (joblib, thread backend).
    w : array-like, optional
        Precomputed prior affinity; built from the dataset with spec.graph if not given.

    Returns
    -------
    list of TrialResult
        Ordered by (position of the method in spec.methods, trial index), independent of scheduling.
    """

    logger = _get_logger(logger)
    dataset = spec.dataset
    if not dataset.has_truth:
        raise InputError(f"Dataset '{dataset.name}' has no labels; trials can only be scored against ground truth.")
    n_jobs = _convert_to_int(n_jobs, "n_jobs", minimum=1)
    alpha = _convert_to_float(alpha, "alpha", minimum=0)
    beta = _convert_to_float(beta, "beta", minimum=0)

    if w is None and any(m in ("joint", "symnmf") for m in spec.methods):
        w = build_affinity(dataset.x, spec.graph, logger=logger)  # shared by all trials

    tasks = []
    for method in spec.methods:
        a, b = (alpha, beta) if method == "joint" else (None, None)
        tasks.extend([(method, a, b, k) for k in range(spec.trials)])

    def run(task):
        method, a, b, k = task
        return _run_method(method, dataset, w, spec, a, b, k, logger)

    logger.info(f"Running {spec.trials} trial(s) of {spec.methods} on '{dataset.name}' (alpha={alpha:g}, beta={beta:g})")
    results = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(run)(task) for task in tasks)  # keeps task order

    return results


def aggregate(results):
    """
    Mean and standard deviation (n-1 denominator, 0 for a single trial) per (dataset, method, alpha, beta, metric).

    Failed trials are excluded from the statistics and counted in the 'failed' field.

    Returns
    -------
    list of AggregateRecord
        In order of first appearance of each group.
    """

    groups = {}
    for result in results:
        key = (result.dataset, result.method, result.alpha, result.beta)
        groups.setdefault(key, []).append(result)

    records = []
    for (dataset, method, alpha, beta), members in groups.items():
        valid = [r for r in members if not r.failed]
        for metric in config.metric_names:
            values = np.array([r.metrics[metric] for r in valid], dtype=np.float64)
            mean = float(values.mean()) if values.size > 0 else float("nan")
            std = float(values.std(ddof=1)) if values.size > 1 else (0.0 if values.size == 1 else float("nan"))
            records.append(AggregateRecord(dataset=dataset, method=method, alpha=alpha, beta=beta, metric=metric,
                                           mean=mean, std=std, trials=int(values.size),
                                           failed=len(members) - len(valid)))

    return records


def grid_search(spec, n_jobs=1, logger=None):
    """
    Evaluate the joint method on every (alpha, beta) cell of the grids.

    The best cell has the highest mean ACC; ties go to the lexicographically smaller (alpha, beta).
    Cells with a failed trial are marked failed and never selected.

    Returns
    -------
    GridResult
    """

    logger = _get_logger(logger)
    dataset = spec.dataset
    if not dataset.has_truth:
        raise InputError(f"Dataset '{dataset.name}' has no labels; a grid search needs ground truth.")

    joint_spec = ExperimentSpec(dataset=dataset, methods=["joint"], alpha_grid=spec.alpha_grid, beta_grid=spec.beta_grid,
                                trials=spec.trials, base_seed=spec.base_seed, graph=spec.graph,
                                n_clusters=spec.n_clusters, tol=spec.tol, max_iter=spec.max_iter)
    w = build_affinity(dataset.x, spec.graph, logger=logger)

    table = {}
    for alpha in spec.alpha_grid:
        for beta in spec.beta_grid:
            results = run_trials(joint_spec, alpha=alpha, beta=beta, n_jobs=n_jobs, w=w, logger=logger)
            table[(alpha, beta)] = GridCell(alpha=alpha, beta=beta, results=results)

    best = None
    for key in sorted(table):
        cell = table[key]
        if cell.failed:
            logger.warning(f"Grid cell alpha={cell.alpha:g}, beta={cell.beta:g} has failed trials and is excluded.")
            continue
        if best is None or cell.mean.acc > table[best].mean.acc:
            best = key

    if best is None:
        raise NumericalError("Every cell of the grid search contains failed trials.")

    logger.info(f"Best cell: alpha={best[0]:g}, beta={best[1]:g} with mean ACC {table[best].mean.acc:.4f}")
    return GridResult(best_alpha=best[0], best_beta=best[1], table=table)


def compare_methods(results_a, results_b, metric="acc", level=config.significance_level):
    """
    Compare two sets of trial results with the two-sided Wilcoxon rank-sum test.

    Returns
    -------
    Comparison
        verdict is "better" (or "worse") if p < level and method a has the larger (or smaller) mean; otherwise "no_difference".
    """

    metric = _check_option(metric, "metric", config.metric_names)
    values_a = [r.metrics[metric] for r in results_a if not r.failed]
    values_b = [r.metrics[metric] for r in results_b if not r.failed]
    if len(values_a) == 0 or len(values_b) == 0:
        raise InputError("Both result lists must contain at least one successful trial.")

    datasets = {r.dataset for r in list(results_a) + list(results_b)}
    if len(datasets) > 1:
        raise InputError(f"Results to compare must come from the same dataset, found: {sorted(datasets)}")

    test = wilcoxon_rank_sum(values_a, values_b)
    mean_a, mean_b = float(np.mean(values_a)), float(np.mean(values_b))

    verdict = "no_difference"
    if test.pvalue < level and mean_a > mean_b:
        verdict = "better"
    elif test.pvalue < level and mean_a < mean_b:
        verdict = "worse"

    return Comparison(method_a=results_a[0].method, method_b=results_b[0].method, metric=metric,
                      verdict=verdict, pvalue=test.pvalue, mean_a=mean_a, mean_b=mean_b)


def mean_reports(results):
    """ Mean MetricReport per method over its successful trials; methods without one are left out. """

    reports = {}
    for method in dict.fromkeys(r.method for r in results):
        valid = [r for r in results if r.method == method and not r.failed]
        if len(valid) > 0:
            reports[method] = MetricReport(**{m: float(np.mean([r.metrics[m] for r in valid])) for m in config.metric_names})

    return reports


def summarize(results, comparisons, method="joint"):
    """
    Tally the comparisons of one method against the others.

    Returns
    -------
    dict
        "verdicts": count and ratio of better / no_difference / worse over all comparisons.
        "rank": for every metric, the rank bucket counts of the method's mean per dataset.
        Empty if the method has no successful trial.
    """

    by_dataset = {}
    for dataset in dict.fromkeys(r.dataset for r in results):
        by_dataset[dataset] = mean_reports([r for r in results if r.dataset == dataset])

    if not any(method in row for row in by_dataset.values()):
        return {}

    ranked = {dataset: row for dataset, row in by_dataset.items() if method in row}
    return {"method": method,
            "verdicts": verdict_counts(comparisons),
            "rank": {metric: rank_counts(ranked, method, metric=metric) for metric in config.metric_names}}


###############################################################################
# -------------------------------- Reports ---------------------------------- #
###############################################################################

def _round(value, digits=config.report_digits):
    """ Round to significant digits; None and NaN pass through as None. """

    if value is None or (isinstance(value, float) and np.isnan(value)):
        return None
    return float(f"{value:.{digits}g}")


def _resolve_format(path, format):
    """ Explicit format, else the file extension if it is csv or json, else csv. """

    if format is None:
        extension = os.path.splitext(path)[1].lstrip(".").lower()
        format = extension if extension in ("csv", "json") else "csv"
    return _check_option(format, "format", ["csv", "json"])


def _write_records(records, path, format=None):
    """ Write a list of flat dicts as CSV (header row first) or as a JSON list. """

    format = _resolve_format(path, format)
    if format == "csv":
        frame = pd.DataFrame.from_records(records)
        frame.to_csv(path, index=False, float_format=f"%.{config.report_digits}g")
    else:
        with open(path, "w") as f:
            json.dump(records, f, indent=4)
            f.write("\n")


def report_records(results):
    """ Aggregated results as flat dicts with the report columns, numbers rounded to 6 significant digits. """

    records = []
    for rec in aggregate(results):
        records.append({"dataset": rec.dataset, "method": rec.method, "alpha": _round(rec.alpha), "beta": _round(rec.beta),
                        "metric": rec.metric, "mean": _round(rec.mean), "std": _round(rec.std), "trials": rec.trials})
    return records


def emit_report(results, format, path):
    """
    Write aggregated trial results.

    Columns: dataset, method, alpha, beta, metric, mean, std, trials. alpha and beta are empty (CSV) or
    null (JSON) for methods without hyperparameters.
    A format of None is taken from the file extension.
    """

    if len(results) == 0:
        raise InputError("Cannot write a report without results.")
    _write_records(report_records(results), path, format)


def emit_grid(grid, path, format=None):
    """ Write the mean metrics of every grid cell (the alpha x beta surface); failed cells have empty metrics. """

    records = []
    for (alpha, beta), cell in sorted(grid.table.items()):
        mean = cell.mean
        record = {"alpha": _round(alpha), "beta": _round(beta)}
        for metric in config.metric_names:
            record[metric] = None if mean is None else _round(mean[metric])
        record["failed"] = cell.failed
        records.append(record)

    _write_records(records, path, format)


def emit_comparisons(comparisons, path, format=None):
    records = [{"method_a": c.method_a, "method_b": c.method_b, "metric": c.metric, "verdict": c.verdict,
                "pvalue": _round(c.pvalue), "mean_a": _round(c.mean_a), "mean_b": _round(c.mean_b)} for c in comparisons]
    _write_records(records, path, format)


def emit_summary(summary, path):
    """ Write the verdict and rank summary of a bench run as JSON. """

    with open(path, "w") as f:
        json.dump(summary, f, indent=4)
        f.write("\n")


def emit_trace(trace, path):
    """ Write the objective and the max-abs changes per iteration as CSV; iteration 0 is the initialization. """

    rows = len(trace.objective_per_iter)

    def column(deltas):
        values = [np.nan] + list(deltas)
        return values + [np.nan] * (rows - len(values))  # SymNMF traces have no S deltas

    frame = pd.DataFrame({"iteration": np.arange(rows),
                          "objective": trace.objective_per_iter,
                          "s_delta": column(trace.s_delta_per_iter),
                          "v_delta": column(trace.v_delta_per_iter)})
    frame.to_csv(path, index=False, float_format="%.10g")


###############################################################################
# ---------------------------- Experiment class ----------------------------- #
###############################################################################

_data_keys = {"data": None, "labels": "last_column", "header": False, "standardize": False, "unit_scale": False}
_spec_keys = ["methods", "alpha_grid", "beta_grid", "trials", "base_seed", "n_clusters", "tol", "max_iter"]
_graph_keys = ["p", "weighting", "normalization"]


@dataclass
class BenchResult:
    grid: GridResult
    results: List[TrialResult]
    comparisons: List[Comparison]
    summary: Dict[str, dict] = field(default_factory=dict)


class Experiment():
    """
    Run repeated trials, grid searches and method comparisons on one dataset.

    Parameters
    ----------
    spec : ExperimentSpec, optional
        Can also be filled later with from_config.
    verbosity : int, default 1
        Level of logging. 0 = only warnings and errors, 1 = info, 2 = debug.
    n_jobs : int, default 1
        Number of threads used for trials.
    """

    def __init__(self, spec=None, verbosity=1, n_jobs=1):

        self.logger = setup_logger(self.__class__.__name__, verbosity)
        self.spec = spec
        self.n_jobs = _convert_to_int(n_jobs, "n_jobs", minimum=1)
        self._data_options = None

    def _check_spec(self):
        if self.spec is None:
            raise ConfigError("The experiment has no definition. Give one at initialization or load it with from_config.")

    # ------------------------------------------------------------------ #
    # Config round-trip

    def get_config(self):
        """
        Collect a dictionary with the configuration of the experiment.

        Returns
        -------
        config : dict
            JSON-serializable; can be read again with from_config.
        """

        self._check_spec()
        spec = self.spec

        config_dict = dict(self._data_options) if self._data_options is not None else {"data": spec.dataset.name}
        for key in _spec_keys:
            config_dict[key] = getattr(spec, key)
        for key in _graph_keys:
            config_dict[key] = getattr(spec.graph, key)

        return config_dict

    def write_config(self, filename):
        """ Write the configuration of the experiment to a json-formatted file. """

        with open(filename, "w") as f:
            json.dump(self.get_config(), f, indent=4)
            f.write("\n")

    def from_config(self, config):
        """
        Set up the experiment from a configuration dictionary.

        Parameters
        ----------
        config : str or dict
            A path to a configuration file or a dictionary (such as from Experiment.get_config()).
            'data' is required; all other keys are optional.
        """

        # Load config from file if necessary
        if isinstance(config, str):
            with open(config, "r") as f:
                try:
                    config = json.load(f)
                except Exception as e:
                    raise ConfigError(f"Could not load config file from {config}. The error was: {e}")

        if not isinstance(config, dict):
            raise ConfigError(f"Invalid value for 'config' parameter: expected a dict, got {type(config).__name__}.")

        valid_keys = list(_data_keys) + _spec_keys + _graph_keys
        unknown = [key for key in config if key not in valid_keys]
        if len(unknown) > 0:
            raise ConfigError(f"Invalid keys in config: {unknown}. Valid keys are: {valid_keys}")
        if config.get("data") is None:
            raise ConfigError("The config must name a dataset with the 'data' key.")

        data_options = {key: config.get(key, default) for key, default in _data_keys.items()}
        data_options["header"] = _convert_to_bool(data_options["header"])
        data_options["standardize"] = _convert_to_bool(data_options["standardize"])
        data_options["unit_scale"] = _convert_to_bool(data_options["unit_scale"])

        self.logger.info(f"Loading dataset '{data_options['data']}'")
        dataset = load_dataset(**data_options)
        self.logger.info(f"Loaded {dataset.n} samples with {dataset.d} features")

        graph = GraphConfig(**{key: config[key] for key in _graph_keys if key in config})
        spec_options = {key: config[key] for key in _spec_keys if key in config}

        self.spec = ExperimentSpec(dataset=dataset, graph=graph, **spec_options)
        self._data_options = data_options

        return self

    # ------------------------------------------------------------------ #
    # Runs

    def run_trials(self, alpha=1.0, beta=1.0):
        self._check_spec()
        return run_trials(self.spec, alpha=alpha, beta=beta, n_jobs=self.n_jobs, logger=self.logger)

    def grid_search(self):
        self._check_spec()
        return grid_search(self.spec, n_jobs=self.n_jobs, logger=self.logger)

    def bench(self):
        """
        Grid search for the joint method, trials of the remaining methods, then significance tests of
        the joint method against every other method on each metric.

        Returns
        -------
        BenchResult
        """

        self._check_spec()
        spec = self.spec

        grid = None
        results = []
        if "joint" in spec.methods:
            grid = self.grid_search()
            results.extend(grid.best_cell.results)

        others = [m for m in spec.methods if m != "joint"]
        if len(others) > 0:
            other_spec = ExperimentSpec(dataset=spec.dataset, methods=others, trials=spec.trials, base_seed=spec.base_seed,
                                        graph=spec.graph, n_clusters=spec.n_clusters, tol=spec.tol, max_iter=spec.max_iter)
            results.extend(run_trials(other_spec, n_jobs=self.n_jobs, logger=self.logger))

        comparisons = []
        if grid is not None:
            joint_results = grid.best_cell.results
            for method in others:
                method_results = [r for r in results if r.method == method]
                for metric in config.metric_names:
                    comparison = compare_methods(joint_results, method_results, metric=metric)
                    comparisons.append(comparison)
                    self.logger.info(f"joint vs. {method} ({metric}): {comparison.verdict} (p={comparison.pvalue:.3g})")

        summary = summarize(results, comparisons) if grid is not None else {}
        if summary:
            verdicts = summary["verdicts"]
            self.logger.info(f"joint: {verdicts['better']['count']} better, {verdicts['no_difference']['count']} no difference, "
                             f"{verdicts['worse']['count']} worse; ACC rank buckets {summary['rank']['acc']}")

        return BenchResult(grid=grid, results=results, comparisons=comparisons, summary=summary)

    def save_report(self, results, path, format=None):
        """ Write a report; the format is taken from the file extension if not given. """

        emit_report(results, format, path)
        self.logger.info(f"Wrote report to '{path}'")
