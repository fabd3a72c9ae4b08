import os
import re
import numpy as np
import pandas as pd
from dataclasses import dataclass, field
from typing import List, Optional

from jointgraph import dense, graph
from jointgraph.utils import InputError, DataParseError, _convert_to_int, _convert_to_float, _get_logger

BUILTIN_DATASETS = ["iris", "wine"]


@dataclass
class Dataset:
    """
    A data matrix with optional ground truth.

    Parameters
    ----------
    x : numpy.ndarray, shape (d, n)
        One sample per column.
    truth : numpy.ndarray of int, shape (n,), optional
        Labels with contiguous ids 0..c-1.
    name : str
    label_names : list of str, optional
        Original label token of each id.
    """

    x: np.ndarray
    truth: Optional[np.ndarray] = None
    name: str = "dataset"
    label_names: Optional[List[str]] = field(default=None, repr=False)

    def __post_init__(self):
        self.x = dense.as_matrix(self.x, name="x")

        if self.truth is not None:
            truth = np.asarray(self.truth)
            if truth.ndim != 1 or truth.size != self.n:
                raise InputError(f"Labels must be a sequence of length n = {self.n}, but have shape {truth.shape}.")
            if not np.issubdtype(truth.dtype, np.integer):
                raise InputError("Labels must be integer ids. Re-encode labels with pandas.factorize first.")
            if truth.min() != 0 or not np.array_equal(np.unique(truth), np.arange(truth.max() + 1)):
                raise InputError(f"Labels must use contiguous ids 0..c-1, found: {np.unique(truth).tolist()}")
            self.truth = truth.astype(np.int64)

    @property
    def d(self):
        return self.x.shape[0]

    @property
    def n(self):
        return self.x.shape[1]

    @property
    def n_clusters(self):
        """ Number of true classes, or None without labels. """
        return None if self.truth is None else int(self.truth.max() + 1)

    @property
    def has_truth(self):
        return self.truth is not None


###############################################################################
# ------------------------------- Reading ----------------------------------- #
###############################################################################

def _data_lines(path, header):
    """ 1-based line numbers of the non-blank data lines in the file (what pandas parses into rows). """

    with open(path, encoding="utf-8") as f:
        lines = [i + 1 for i, line in enumerate(f) if line.strip() != ""]

    return lines[1:] if header else lines


def load_csv(path, labels="last_column", header=False, delimiter=","):
    """
    Read a dataset with one sample per row.

    Parameters
    ----------
    path : str
        Path to a UTF-8 text file with comma-separated decimal features.
    labels : str, default "last_column"
        "last_column" (or "last") if the final token of each row is the label, "none" for unlabeled
        data, or the path of a file with one label per line.
    header : bool, default False
        Skip the first non-blank line.
    delimiter : str, default ","

    Returns
    -------
    Dataset
        Labels are re-encoded to 0..c-1 in order of first appearance.
    """

    if not os.path.exists(path):
        raise FileNotFoundError(f"Data file '{path}' does not exist.")

    line_numbers = _data_lines(path, header)
    if len(line_numbers) == 0:
        raise InputError(f"Data file '{path}' is empty.")

    try:
        table = pd.read_csv(path, sep=delimiter, header=None, skiprows=_header_rows(path, header), dtype=str,
                            keep_default_na=False, skip_blank_lines=True, skipinitialspace=True, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise InputError(f"Data file '{path}' is empty.")
    except pd.errors.ParserError as e:
        m = re.search(r"line (\d+)", str(e))
        line = None
        if m:
            row = int(m.group(1)) - 1 - (1 if header else 0)  # pandas counts physical lines after skipped ones
            line = line_numbers[row] if 0 <= row < len(line_numbers) else int(m.group(1))
        raise DataParseError(f"Ragged row in '{path}' at line {line}: {e}", line=line)

    # Rows shorter than the first one are padded by pandas
    empty = table.fillna("").apply(lambda col: col.str.strip() == "")
    short = (table.isna() | empty).any(axis=1).to_numpy()
    if np.any(short):
        line = line_numbers[int(np.argmax(short))]
        raise DataParseError(f"Ragged row or empty field in '{path}' at line {line}: expected {table.shape[1]} fields.", line=line)

    label_mode = "last_column" if labels in ("last", "last_column") else labels
    if label_mode == "last_column":
        if table.shape[1] < 2:
            raise DataParseError(f"Rows in '{path}' need at least one feature and a label.", line=line_numbers[0])
        features, tokens = table.iloc[:, :-1], table.iloc[:, -1].str.strip().tolist()
    else:
        features, tokens = table, None

    values = features.apply(lambda col: col.str.strip().map(_parse_float)).to_numpy(dtype=np.float64)
    invalid = ~np.isfinite(values)
    if np.any(invalid):
        row, col = np.argwhere(invalid)[0]
        line = line_numbers[row]
        raise DataParseError(f"Non-numeric feature '{features.iat[row, col]}' in '{path}' at line {line}, column {col + 1}.", line=line)

    if label_mode not in ("last_column", "none"):
        tokens = _read_label_file(label_mode, expected=values.shape[0])

    name = os.path.splitext(os.path.basename(path))[0]
    if tokens is None:
        return Dataset(x=values.T, truth=None, name=name)

    truth, uniques = pd.factorize(pd.Series(tokens, dtype=str), sort=False)  # ids in order of first appearance
    return Dataset(x=values.T, truth=truth.astype(np.int64), name=name, label_names=[str(u) for u in uniques])


def _parse_float(token):
    """ Exact decimal-to-double conversion of one field; unparsable fields become NaN. """

    try:
        return float(token)
    except ValueError:
        return np.nan


def _header_rows(path, header):
    """ Physical row index of the header line, so blank lines before it are handled as well. """

    if not header:
        return None
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f):
            if line.strip() != "":
                return [i]
    return None


def _read_label_file(path, expected):
    if not os.path.exists(path):
        raise FileNotFoundError(f"Label file '{path}' does not exist.")

    with open(path, encoding="utf-8") as f:
        tokens = [line.strip() for line in f if line.strip() != ""]

    if len(tokens) != expected:
        raise InputError(f"Label file '{path}' has {len(tokens)} labels, but the data has {expected} samples.")
    return tokens


def load_builtin(name):
    """
    Load a dataset bundled with scikit-learn ("iris" or "wine"); no download is needed.

    Notes
    -----
    IRIS has 150 samples, 4 features and 3 classes. WINE has 178 samples, 13 features and 3 classes.
    """

    from sklearn import datasets as sk_datasets

    loaders = dict(zip(BUILTIN_DATASETS, [sk_datasets.load_iris, sk_datasets.load_wine]))
    key = str(name).lower()
    if key not in loaders:
        raise InputError(f"Unknown builtin dataset '{name}'. Available datasets are: {list(loaders)}")

    bunch = loaders[key]()
    return Dataset(x=np.asarray(bunch.data, dtype=np.float64).T, truth=np.asarray(bunch.target, dtype=np.int64),
                   name=key, label_names=[str(t) for t in bunch.target_names])


###############################################################################
# ------------------------------- Writing ----------------------------------- #
###############################################################################

def write_csv(dataset, path):
    """ Write a dataset with one sample per row; features use 17 significant digits so reloading is exact. """

    frame = pd.DataFrame(np.asarray(dataset.x).T)
    if dataset.truth is not None:
        if dataset.label_names is not None:
            frame["label"] = [dataset.label_names[i] for i in dataset.truth]
        else:
            frame["label"] = dataset.truth

    frame.to_csv(path, header=False, index=False, float_format="%.17g")


def make_blobs(n_per_cluster, d, centers_scale=10.0, noise_sigma=1.0, seed=0, logger=None):
    """
    Isotropic Gaussian clusters.

    Parameters
    ----------
    n_per_cluster : list of int
        Number of samples of each cluster (all >= 1).
    d : int
        Number of features.
    centers_scale : float, default 10
        Cluster centers are drawn uniformly from [-centers_scale, centers_scale]^d.
    noise_sigma : float, default 1
        Standard deviation of the isotropic noise around each center.
    seed : int, default 0

    Returns
    -------
    Dataset
        Samples are ordered by cluster; truth holds the cluster ids.
    """

    logger = _get_logger(logger)

    sizes = [_convert_to_int(s, "n_per_cluster", minimum=1) for s in n_per_cluster]
    if len(sizes) == 0:
        raise InputError("At least one cluster size must be given.")
    d = _convert_to_int(d, "d", minimum=1)
    centers_scale = _convert_to_float(centers_scale, "centers_scale", minimum=0)
    noise_sigma = _convert_to_float(noise_sigma, "noise_sigma", minimum=0)
    seed = _convert_to_int(seed, "seed", minimum=0)

    rng = np.random.default_rng(seed)
    centers = rng.uniform(-centers_scale, centers_scale, size=(len(sizes), d))

    truth = np.repeat(np.arange(len(sizes)), sizes)
    samples = centers[truth] + noise_sigma * rng.standard_normal(size=(truth.size, d))
    logger.debug(f"Generated {truth.size} samples in {len(sizes)} clusters with d={d}")

    return Dataset(x=samples.T, truth=truth, name=f"blobs-{seed}")


def load_dataset(data, labels="last_column", header=False, standardize=False, unit_scale=False):
    """
    Load a dataset by name or path: "iris" and "wine" are read from scikit-learn, anything else with load_csv.

    Parameters
    ----------
    data : str
        Builtin dataset name or path to a CSV file.
    labels : str, default "last_column"
        See load_csv. Ignored for builtin datasets.
    header : bool, default False
    standardize : bool, default False
        Scale every feature to mean 0 and unit standard deviation after loading.
    unit_scale : bool, default False
        Divide the data by its largest singular value (after standardizing, if both are set).

    Returns
    -------
    Dataset
    """

    if str(data).lower() in BUILTIN_DATASETS and not os.path.exists(str(data)):
        dataset = load_builtin(data)
    else:
        dataset = load_csv(data, labels=labels, header=header)

    if standardize:
        dataset.x = graph.standardize(dataset.x)
    if unit_scale:
        dataset.x = graph.unit_scale(dataset.x)

    return dataset
