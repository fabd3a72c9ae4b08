import numpy as np
from dataclasses import dataclass
from typing import Optional
from scipy.spatial.distance import cdist

from jointgraph import config
from jointgraph import dense
from jointgraph.utils import InputError, ConfigError, _convert_to_int, _check_option, _get_logger


###############################################################################
# ------------------------------ Configuration ------------------------------ #
###############################################################################

@dataclass
class GraphConfig:
    """
    Parameters of the p-nearest-neighbor graph.

    Parameters
    ----------
    p : int, optional
        Number of nearest neighbors per sample. If None, the rule floor(log2(n) + 1) is used (see default_p).
    weighting : str, default "rbf"
        Edge weights: "binary" (all edges weigh 1) or "rbf" (locally scaled Gaussian kernel).
    normalization : str, default "symmetric"
        "symmetric" for D^(-1/2) G D^(-1/2), or "none" to use G directly.
    """

    p: Optional[int] = None
    weighting: str = "rbf"
    normalization: str = "symmetric"

    def __post_init__(self):
        if self.p is not None:
            self.p = _convert_to_int(self.p, "p", minimum=1)
        self.weighting = _check_option(self.weighting, "weighting", config.weightings)
        self.normalization = _check_option(self.normalization, "normalization", config.normalizations)

    def resolve_p(self, n):
        """ Return the neighbor count for n samples, checking 1 <= p <= n-1. """

        p = default_p(n) if self.p is None else self.p
        if not 1 <= p <= n - 1:
            raise ConfigError(f"Invalid value for 'p' parameter: '{p}'. Must be between 1 and n-1 = {n - 1}.")
        return p


###############################################################################
# ------------------------------- Operations -------------------------------- #
###############################################################################

def _check_data(x):
    """ Validate a d x n data matrix (features in rows, samples in columns). """

    x = dense.as_matrix(x, name="x")
    if x.shape[1] < 2:
        raise InputError(f"At least 2 samples (columns) are needed, but the data matrix has shape {x.shape}.")
    return x


def standardize(x):
    """
    Center each feature (row) to mean 0 and scale it to unit standard deviation.

    Constant features are centered only (they become 0).
    """

    x = dense.as_matrix(x, name="x")
    centered = x - x.mean(axis=1, keepdims=True)
    std = centered.std(axis=1, keepdims=True)
    std[std == 0] = 1.0

    return dense.as_matrix(centered / std, name="x")


def unit_scale(x):
    """
    Divide x by its largest singular value, so that the eigenvalues of X^T X lie in [0, 1].

    Pairwise-distance ratios and therefore the pNN graph are unchanged. An all-zero matrix is returned as is.
    """

    x = dense.as_matrix(x, name="x")
    norm = np.linalg.norm(x, 2)
    if norm == 0:
        return x

    return dense.as_matrix(x / norm, name="x")


def pairwise_sq_dist(x):
    """
    Squared Euclidean distances between all pairs of samples.

    Parameters
    ----------
    x : array-like, shape (d, n)
        Data matrix with one sample per column.

    Returns
    -------
    numpy.ndarray, shape (n, n)
        Symmetric matrix with zero diagonal.
    """

    x = _check_data(x)
    samples = x.T

    dist = cdist(samples, samples, metric="sqeuclidean")  # exact per-pair differences; coincident points give 0
    dist = np.maximum(dist, dist.T)  # exact symmetry
    np.fill_diagonal(dist, 0.0)

    return dense.as_matrix(dist, name="distances")


def default_p(n):
    """ Neighbor count floor(log2(n) + 1), clamped to [1, n-1]. """

    n = _convert_to_int(n, "n", minimum=2)
    p = int(np.floor(np.log2(n) + 1))

    return min(max(p, 1), n - 1)


def nearest_neighbors(dist_sq, p):
    """
    Indices of the p nearest neighbors of every sample, nearest first.

    Ties at identical distance are broken by the smaller sample index. A sample is never its own neighbor.

    Returns
    -------
    numpy.ndarray of int, shape (n, p)
    """

    n = dist_sq.shape[0]
    if not 1 <= p <= n - 1:
        raise ConfigError(f"Invalid value for 'p' parameter: '{p}'. Must be between 1 and n-1 = {n - 1}.")

    masked = np.array(dist_sq, copy=True)
    np.fill_diagonal(masked, np.inf)
    order = np.argsort(masked, axis=1, kind="stable")  # stable: equal distances keep index order

    return order[:, :p]


def rbf_bandwidths(dist_sq, p, logger=None):
    """
    Per-sample bandwidth: the mean Euclidean distance from each sample to its p nearest neighbors.

    Zero bandwidths (a sample whose neighbors all coincide with it) are replaced by the smallest
    positive bandwidth, or by 1 if every bandwidth is zero.

    Returns
    -------
    numpy.ndarray, shape (n,)
    """

    logger = _get_logger(logger)

    neighbors = nearest_neighbors(dist_sq, p)
    rows = np.arange(dist_sq.shape[0])[:, None]
    sigma = np.sqrt(dist_sq[rows, neighbors]).mean(axis=1)

    zero = sigma <= 0
    if np.any(zero):
        positive = sigma[~zero]
        replacement = positive.min() if positive.size > 0 else 1.0
        logger.warning(f"{int(zero.sum())} sample(s) have zero distance to all of their {p} nearest neighbors. "
                       f"Their RBF bandwidth is set to {replacement:.6g}.")
        sigma[zero] = replacement

    return sigma


def build_pnn_graph(x, cfg=None, logger=None):
    """
    Build the p-nearest-neighbor affinity graph G.

    Parameters
    ----------
    x : array-like, shape (d, n)
        Data matrix with one sample per column.
    cfg : GraphConfig, optional
        Graph parameters. Defaults to GraphConfig().
    logger : logging.Logger, optional

    Returns
    -------
    numpy.ndarray, shape (n, n)
        Symmetric, nonnegative graph with zero diagonal. Edge (i, j) exists if j is among the p
        nearest neighbors of i or vice versa (G <- max(G, G^T)).
    """

    logger = _get_logger(logger)
    cfg = GraphConfig() if cfg is None else cfg

    dist_sq = pairwise_sq_dist(x)
    n = dist_sq.shape[0]
    p = cfg.resolve_p(n)
    logger.debug(f"Building {cfg.weighting} pNN graph with n={n}, p={p}")

    neighbors = nearest_neighbors(dist_sq, p)
    rows = np.repeat(np.arange(n), p)
    cols = neighbors.ravel()

    g = np.zeros((n, n))
    if cfg.weighting == "binary":
        g[rows, cols] = 1.0
    else:
        sigma = rbf_bandwidths(dist_sq, p, logger=logger)
        g[rows, cols] = np.exp(-dist_sq[rows, cols] / (sigma[rows] * sigma[cols]))

    g = np.maximum(g, g.T)
    np.fill_diagonal(g, 0.0)

    return dense.as_matrix(g, name="G")


def normalize_affinity(g, logger=None):
    """
    Symmetric degree normalization W = D^(-1/2) G D^(-1/2) with D_ii = sum_j G_ij.

    Vertices with zero degree keep all-zero rows and columns.

    Parameters
    ----------
    g : array-like, shape (n, n)
        Symmetric (within 1e-9), nonnegative graph with zero diagonal.

    Returns
    -------
    numpy.ndarray, shape (n, n)
    """

    logger = _get_logger(logger)
    g = _check_graph(g, "G")

    degree = g.sum(axis=1)
    isolated = degree <= 0
    if np.any(isolated):
        logger.warning(f"{int(isolated.sum())} vertex/vertices have zero degree. Their rows in the normalized affinity are zero.")

    inv_sqrt = np.zeros_like(degree)
    inv_sqrt[~isolated] = 1.0 / np.sqrt(degree[~isolated])

    w = inv_sqrt[:, None] * g * inv_sqrt[None, :]
    w = (w + w.T) / 2.0
    np.fill_diagonal(w, 0.0)

    return dense.as_matrix(w, name="W")


def _check_graph(g, name):
    """ Validate that g is a square, symmetric, nonnegative matrix with zero diagonal. """

    g = dense.as_matrix(g, name=name)
    if g.shape[0] != g.shape[1]:
        raise InputError(f"'{name}' must be square, but has shape {g.shape}.")
    if not dense.is_symmetric(g, tol=1e-9):
        raise InputError(f"'{name}' must be symmetric; max |{name} - {name}^T| = {dense.max_abs(g - g.T):.3g} exceeds 1e-9.")
    if np.any(g < 0):
        raise InputError(f"'{name}' must be nonnegative.")
    if np.any(np.diag(g) != 0):
        raise InputError(f"'{name}' must have a zero diagonal.")
    return g


def build_affinity(x, cfg=None, logger=None):
    """
    Build the affinity matrix consumed by the solvers: the pNN graph, normalized according to cfg.normalization.

    Returns
    -------
    numpy.ndarray, shape (n, n)
    """

    cfg = GraphConfig() if cfg is None else cfg
    g = build_pnn_graph(x, cfg, logger=logger)

    if cfg.normalization == "symmetric":
        return normalize_affinity(g, logger=logger)
    return _check_graph(g, "G")
