import time
import numpy as np
from dataclasses import dataclass
from scipy.spatial.distance import cdist

from jointgraph import config
from jointgraph import dense
from jointgraph.solver import SolveTrace, assign_clusters
from jointgraph.utils import (ConfigError, NumericalError, setup_logger, _get_logger,
                              _convert_to_int, _convert_to_float)


###############################################################################
# --------------------------------- SymNMF ---------------------------------- #
###############################################################################

def symnmf_objective(w, v):
    """ ||W - VV^T||_F^2 """
    return dense.frobenius_norm_sq(w - dense.matmul(v, dense.transpose(v)))


def symnmf_update(w, v, eta=config.symnmf_eta, guard=config.denom_guard):
    """ Damped multiplicative update V <- V * (1 - eta + eta * (WV) / (VV^T V + guard)). """

    ratio = dense.safe_divide(dense.matmul(w, v), dense.matmul(v, dense.matmul(dense.transpose(v), v)), guard)
    return dense.hadamard(v, (1.0 - eta) + eta * ratio)


def symnmf_solve(w, c, tol=config.tolerance, max_iter=config.max_iter, seed=0, eta=config.symnmf_eta,
                 denom_guard=config.denom_guard, init=None, logger=None):
    """
    Symmetric nonnegative factorization min ||W - VV^T||_F^2 subject to V >= 0.

    Parameters
    ----------
    w : array-like, shape (n, n)
        Symmetric nonnegative affinity.
    c : int
        Number of clusters (columns of V).
    tol : float, default 1e-4
        Stop when max|V_new - V| < tol.
    max_iter : int, default 1000
    seed : int, default 0
        Seed of the uniform (0, 1) initialization.
    eta : float, default 0.5
        Damping of the multiplicative rule.
    init : array-like, shape (n, c), optional
        Strictly positive starting point; overrides the random initialization.

    Returns
    -------
    v : numpy.ndarray, shape (n, c)
    trace : SolveTrace
        objective_per_iter holds ||W - VV^T||_F^2 (initial value first); s_delta_per_iter stays empty.
    """

    logger = _get_logger(logger)

    w = dense.as_matrix(w, name="W")
    n = w.shape[0]
    c = _convert_to_int(c, "c", minimum=2)
    if c > n:
        raise ConfigError(f"Invalid value for 'c' parameter: '{c}'. Must be <= n = {n}.")
    tol = _convert_to_float(tol, "tol", minimum=0, strict=True)
    max_iter = _convert_to_int(max_iter, "max_iter", minimum=1)
    eta = _convert_to_float(eta, "eta", minimum=0, strict=True)

    start = time.perf_counter()
    if init is None:
        rng = np.random.default_rng(_convert_to_int(seed, "seed", minimum=0))
        v = dense.as_matrix(rng.uniform(np.finfo(np.float64).tiny, 1.0, size=(n, c)), name="V")
    else:
        v = dense.as_matrix(init, name="init")
        if v.shape != (n, c) or np.any(v <= 0):
            raise ConfigError(f"Invalid value for 'init' parameter: must be a strictly positive ({n}, {c}) matrix.")

    trace = SolveTrace()
    trace.objective_per_iter.append(symnmf_objective(w, v))

    for t in range(1, max_iter + 1):
        try:
            v_new = symnmf_update(w, v, eta=eta, guard=denom_guard)
            objective = symnmf_objective(w, v_new)
        except NumericalError as e:
            raise NumericalError(f"Non-finite value in iteration {t} of SymNMF ({e}).", iteration=t)

        v_delta = dense.max_abs(v_new - v)
        v = v_new

        trace.objective_per_iter.append(objective)
        trace.v_delta_per_iter.append(v_delta)
        trace.iterations = t
        logger.debug(f"SymNMF iteration {t}: objective={objective:.8g}, max|dV|={v_delta:.3g}")

        if v_delta < tol:
            trace.terminated_by = "tolerance"
            break

    trace.wall_time_ms = (time.perf_counter() - start) * 1000.0
    if not trace.converged:
        logger.warning(f"SymNMF reached max_iter={max_iter} without meeting tol={tol:g}.")

    return v, trace


class SymNMF():
    """ Clusterer factorizing a fixed affinity W ~ VV^T with V >= 0; labels are the row-wise argmax of V. """

    def __init__(self, n_clusters=2, tol=config.tolerance, max_iter=config.max_iter, seed=0, verbosity=0):

        self.n_clusters = n_clusters
        self.tol = tol
        self.max_iter = max_iter
        self.seed = seed
        self.logger = setup_logger(self.__class__.__name__, verbosity)

        self.membership_ = None
        self.labels_ = None
        self.trace_ = None

    def fit(self, w):
        self.logger.info(f"Factorizing affinity with SymNMF (c={self.n_clusters}, seed={self.seed})")
        v, trace = symnmf_solve(w, self.n_clusters, tol=self.tol, max_iter=self.max_iter, seed=self.seed, logger=self.logger)

        self.membership_ = v
        self.labels_ = assign_clusters(v)
        self.trace_ = trace

        return self

    def fit_predict(self, w):
        return self.fit(w).labels_


###############################################################################
# --------------------------------- K-means --------------------------------- #
###############################################################################

@dataclass
class KMeansConfig:
    """
    Parameters
    ----------
    k : int
        Number of clusters.
    max_iter : int, default 300
        Maximum number of Lloyd iterations.
    n_init : int, default 1
        Number of restarts; the run with the lowest inertia is kept.
    seed : int, default 0
    """

    k: int = 2
    max_iter: int = config.kmeans_max_iter
    n_init: int = 1
    seed: int = 0

    def __post_init__(self):
        self.k = _convert_to_int(self.k, "k", minimum=2)
        self.max_iter = _convert_to_int(self.max_iter, "max_iter", minimum=1)
        self.n_init = _convert_to_int(self.n_init, "n_init", minimum=1)
        self.seed = _convert_to_int(self.seed, "seed", minimum=0)


def _canonical_order(points):
    """ Lexicographic order of the points by coordinates, so that seeding does not depend on input order. """
    return np.lexsort(points.T[::-1])


def _kmeans_plus_plus(points, k, rng, order):
    """ k-means++ seeding: each new center is drawn with probability proportional to D(x)^2. """

    n = points.shape[0]
    first = order[min(int(rng.random() * n), n - 1)]
    centers = [points[first]]
    chosen = {int(first)}

    closest_sq = cdist(points, points[[first]], metric="sqeuclidean")[:, 0]
    for _ in range(1, k):
        weights = closest_sq[order]
        total = weights.sum()
        u = rng.random()

        if total > 0:
            cumulative = np.cumsum(weights)
            pos = min(int(np.searchsorted(cumulative, u * cumulative[-1], side="right")), n - 1)
            while weights[pos] == 0:  # never land on a zero-probability point due to rounding
                pos -= 1
        else:
            # all remaining points coincide with a center; pick any point not chosen yet
            remaining = [i for i in order if int(i) not in chosen]
            pos = int(np.where(order == remaining[min(int(u * len(remaining)), len(remaining) - 1)])[0][0])

        index = int(order[pos])
        chosen.add(index)
        centers.append(points[index])
        closest_sq = np.minimum(closest_sq, cdist(points, points[[index]], metric="sqeuclidean")[:, 0])

    return np.array(centers)


def _reseed_empty(points, labels, centers, k, order):
    """ Move the point farthest from its centroid into each empty cluster. """

    for cluster in range(k):
        if np.any(labels == cluster):
            continue

        counts = np.bincount(labels, minlength=k)
        dist = np.sum((points - centers[labels]) ** 2, axis=1)
        dist[counts[labels] <= 1] = -1.0  # do not empty another cluster

        ranked = order[np.argsort(-dist[order], kind="stable")]
        farthest = int(ranked[0])
        labels[farthest] = cluster
        centers[cluster] = points[farthest]

    return labels, centers


def _lloyd(points, k, max_iter, rng):
    """ One k-means run. Returns labels, inertia, the per-iteration inertia and the number of iterations. """

    order = _canonical_order(points)
    centers = _kmeans_plus_plus(points, k, rng, order)
    labels = None
    history = []

    for iteration in range(1, max_iter + 1):
        new_labels = np.argmin(cdist(points, centers, metric="sqeuclidean"), axis=1)  # ties: smallest center index
        new_labels, centers = _reseed_empty(points, new_labels, centers, k, order)

        centers = np.array([points[new_labels == j].mean(axis=0) for j in range(k)])
        inertia = float(np.sum((points - centers[new_labels]) ** 2))
        history.append(inertia)

        if labels is not None and np.array_equal(labels, new_labels):
            labels = new_labels
            break
        labels = new_labels

    return labels, history[-1], history, iteration


def kmeans(x, cfg, logger=None):
    """
    Lloyd's k-means with k-means++ seeding on the columns of x.

    Parameters
    ----------
    x : array-like, shape (d, n)
        Data matrix with one sample per column.
    cfg : KMeansConfig

    Returns
    -------
    labels : numpy.ndarray of int, shape (n,)
    inertia : float
        Sum of squared distances of the samples to their cluster centroid.
    """

    labels, inertia, _, _ = _kmeans_runs(x, cfg, logger=logger)
    return labels, inertia


def _kmeans_runs(x, cfg, logger=None):
    """ Run cfg.n_init restarts and keep the lowest inertia (first run wins ties). """

    logger = _get_logger(logger)
    points = np.asarray(dense.as_matrix(x, name="x")).T
    n = points.shape[0]
    if cfg.k > n:
        raise ConfigError(f"Invalid value for 'k' parameter: '{cfg.k}'. Must be <= n = {n}.")

    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_init) if cfg.n_init > 1 else [cfg.seed]
    best = None
    for run, seed in enumerate(seeds):
        labels, inertia, history, iterations = _lloyd(points, cfg.k, cfg.max_iter, np.random.default_rng(seed))
        logger.debug(f"k-means run {run + 1}/{cfg.n_init}: inertia={inertia:.6g} after {iterations} iterations")
        if best is None or inertia < best[1]:
            best = (labels, inertia, history, iterations)

    return best


class KMeans():
    """ K-means clusterer on raw features. """

    def __init__(self, k=2, max_iter=config.kmeans_max_iter, n_init=1, seed=0, verbosity=0):

        self.config = KMeansConfig(k=k, max_iter=max_iter, n_init=n_init, seed=seed)
        self.logger = setup_logger(self.__class__.__name__, verbosity)

        self.labels_ = None
        self.inertia_ = None
        self.inertia_history_ = None
        self.n_iter_ = None

    def fit(self, x):
        self.logger.info(f"Running k-means (k={self.config.k}, n_init={self.config.n_init}, seed={self.config.seed})")
        self.labels_, self.inertia_, self.inertia_history_, self.n_iter_ = _kmeans_runs(x, self.config, logger=self.logger)

        return self

    def fit_predict(self, x):
        return self.fit(x).labels_
