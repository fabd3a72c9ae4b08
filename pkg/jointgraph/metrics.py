"""
Clustering-quality metrics (ACC, NMI, PUR, ARI) and the Wilcoxon rank-sum test.
"""

import numpy as np
from dataclasses import dataclass, asdict
from typing import NamedTuple
from scipy.optimize import linear_sum_assignment
from scipy.special import comb
from scipy.stats import norm, rankdata

from jointgraph import config
from jointgraph.utils import InputError


@dataclass
class ContingencyTable:
    """ counts[i, j] is the number of samples in predicted cluster i and true class j. """

    counts: np.ndarray
    n: int

    @property
    def cluster_sizes(self):
        return self.counts.sum(axis=1)

    @property
    def class_sizes(self):
        return self.counts.sum(axis=0)


@dataclass
class MetricReport:
    acc: float
    nmi: float
    pur: float
    ari: float

    def as_dict(self):
        return asdict(self)

    def __getitem__(self, metric):
        if metric not in config.metric_names:
            raise KeyError(f"Unknown metric '{metric}'. Valid metrics are: {config.metric_names}")
        return getattr(self, metric)


class RankSumResult(NamedTuple):
    statistic: float
    pvalue: float


def _as_labels(labels, name):
    array = np.asarray(labels)
    if array.ndim != 1:
        raise InputError(f"'{name}' must be a one-dimensional label sequence, but has shape {array.shape}.")
    return array


def contingency(pred, truth):
    """
    Contingency table of two labelings. Rows follow the sorted unique predicted labels, columns the sorted unique true labels.
    """

    pred = _as_labels(pred, "pred")
    truth = _as_labels(truth, "truth")
    if pred.size != truth.size:
        raise InputError(f"Label sequences differ in length: {pred.size} predicted vs. {truth.size} true labels.")
    if pred.size == 0:
        raise InputError("Label sequences must contain at least one element.")

    _, pred_ids = np.unique(pred, return_inverse=True)
    _, truth_ids = np.unique(truth, return_inverse=True)

    counts = np.zeros((pred_ids.max() + 1, truth_ids.max() + 1), dtype=np.int64)
    np.add.at(counts, (pred_ids, truth_ids), 1)

    return ContingencyTable(counts=counts, n=int(pred.size))


def accuracy(pred, truth):
    """ Fraction of samples correctly labeled under the best one-to-one cluster-to-class matching (Hungarian method). """

    table = contingency(pred, truth)
    rows, cols = linear_sum_assignment(table.counts, maximize=True)

    return float(table.counts[rows, cols].sum() / table.n)


def _entropy(sizes, n):
    p = sizes[sizes > 0] / n
    return float(-np.sum(p * np.log(p)))


def nmi(pred, truth):
    """
    Normalized mutual information I(pred; truth) / sqrt(H(pred) H(truth)) with natural logarithms.

    Two single-block partitions give 1; a single-block partition against a non-trivial one gives 0.
    """

    table = contingency(pred, truth)
    n = table.n
    h_pred = _entropy(table.cluster_sizes, n)
    h_truth = _entropy(table.class_sizes, n)

    if h_pred == 0 and h_truth == 0:
        return 1.0
    if h_pred == 0 or h_truth == 0:
        return 0.0

    joint = table.counts / n
    outer = np.outer(table.cluster_sizes / n, table.class_sizes / n)
    nonzero = joint > 0
    mutual = float(np.sum(joint[nonzero] * np.log(joint[nonzero] / outer[nonzero])))

    return float(np.clip(mutual / np.sqrt(h_pred * h_truth), 0.0, 1.0))


def purity(pred, truth):
    """ (1/n) * sum over predicted clusters of the size of their largest true class. """

    table = contingency(pred, truth)
    return float(table.counts.max(axis=1).sum() / table.n)


def ari(pred, truth):
    """ Adjusted Rand index. Returns 1 when the index is undefined (both partitions trivial and equal). """

    table = contingency(pred, truth)
    if table.n < 2:
        raise InputError("The adjusted Rand index needs at least 2 samples.")

    sum_cells = float(comb(table.counts, 2).sum())
    sum_rows = float(comb(table.cluster_sizes, 2).sum())
    sum_cols = float(comb(table.class_sizes, 2).sum())

    expected = sum_rows * sum_cols / comb(table.n, 2)
    maximum = (sum_rows + sum_cols) / 2.0
    if maximum - expected == 0:
        return 1.0

    return float((sum_cells - expected) / (maximum - expected))


def evaluate(pred, truth):
    """ All four metrics at once. """

    return MetricReport(acc=accuracy(pred, truth), nmi=nmi(pred, truth), pur=purity(pred, truth), ari=ari(pred, truth))


def wilcoxon_rank_sum(a, b):
    """
    Two-sided Wilcoxon rank-sum test.

    Uses average ranks for ties and the normal approximation with tie-corrected variance and continuity correction.

    Returns
    -------
    RankSumResult
        statistic is the rank sum of a; pvalue is two-sided. Samples with all values identical give p = 1.
    """

    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise InputError("Both samples of the rank-sum test must be non-empty.")

    n1, n2 = a.size, b.size
    n = n1 + n2
    ranks = rankdata(np.concatenate([a, b]))
    statistic = float(ranks[:n1].sum())

    _, tie_counts = np.unique(ranks, return_counts=True)
    tie_term = float(np.sum(tie_counts ** 3 - tie_counts))
    variance = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if variance <= 0:
        return RankSumResult(statistic, 1.0)

    mean = n1 * (n + 1) / 2.0
    numerator = max(abs(statistic - mean) - 0.5, 0.0)
    z = numerator / np.sqrt(variance)
    pvalue = float(np.clip(2.0 * norm.sf(z), 0.0, 1.0))

    return RankSumResult(statistic, pvalue)


def rank_counts(mean_table, method, metric="acc"):
    """
    Tally the rank of one method across datasets.

    Parameters
    ----------
    mean_table : dict
        {dataset: {method: MetricReport or float}}.
    method : str
        The method to rank.
    metric : str, default "acc"
        Used when the table holds MetricReports.

    Returns
    -------
    dict
        Counts per rank bucket {"1", "2-3", "4-5", "6+"}. Rank 1 is best; ties share the better rank.
    """

    buckets = {"1": 0, "2-3": 0, "4-5": 0, "6+": 0}
    for dataset, row in mean_table.items():
        if method not in row:
            raise InputError(f"Method '{method}' is missing for dataset '{dataset}'.")

        values = {m: (v[metric] if isinstance(v, MetricReport) else float(v)) for m, v in row.items()}
        rank = 1 + sum(1 for v in values.values() if v > values[method])

        if rank == 1:
            buckets["1"] += 1
        elif rank <= 3:
            buckets["2-3"] += 1
        elif rank <= 5:
            buckets["4-5"] += 1
        else:
            buckets["6+"] += 1

    return buckets


def verdict_counts(verdicts):
    """ Count and ratio of "better", "no_difference" and "worse" verdicts. """

    verdicts = [getattr(v, "verdict", v) for v in verdicts]
    total = len(verdicts)
    summary = {}
    for key in ["better", "no_difference", "worse"]:
        count = sum(1 for v in verdicts if v == key)
        summary[key] = {"count": count, "ratio": count / total if total > 0 else 0.0}

    return summary
