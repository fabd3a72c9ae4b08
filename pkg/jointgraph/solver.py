import time
import numpy as np
from dataclasses import dataclass, field
from typing import List, NamedTuple

from jointgraph import config
from jointgraph import dense
from jointgraph.graph import GraphConfig, build_affinity
from jointgraph.utils import (ConfigError, InputError, NumericalError, ShapeError,
                              setup_logger, _get_logger, _convert_to_int, _convert_to_float)


###############################################################################
# ------------------------------ Domain types ------------------------------- #
###############################################################################

@dataclass
class SolverConfig:
    """
    Parameters of the joint graph / membership model.

    Parameters
    ----------
    alpha : float, default 1
        Weight of the self-expression term ||X - XS||_F^2.
    beta : float, default 1
        Weight of the prior-graph term ||S - W||_F^2.
    n_clusters : int, default 2
        Number of clusters c (columns of V).
    tol : float, default 1e-4
        The solver stops when both max|S_new - S| and max|V_new - V| fall below tol.
    max_iter : int, default 1000
    seed : int, default 0
        Seed of the random positive initialization.
    denom_guard : float, default 1e-12
        Small positive value added to every update denominator.
    """

    alpha: float = 1.0
    beta: float = 1.0
    n_clusters: int = 2
    tol: float = config.tolerance
    max_iter: int = config.max_iter
    seed: int = 0
    denom_guard: float = config.denom_guard

    def __post_init__(self):
        self.alpha = _convert_to_float(self.alpha, "alpha", minimum=0)
        self.beta = _convert_to_float(self.beta, "beta", minimum=0)
        self.n_clusters = _convert_to_int(self.n_clusters, "n_clusters", minimum=2)
        self.tol = _convert_to_float(self.tol, "tol", minimum=0, strict=True)
        self.max_iter = _convert_to_int(self.max_iter, "max_iter", minimum=1)
        self.seed = _convert_to_int(self.seed, "seed", minimum=0)
        if self.seed >= 2**64:
            raise ConfigError(f"Invalid value for 'seed' parameter: '{self.seed}'. Must fit in 64 bits.")
        self.denom_guard = _convert_to_float(self.denom_guard, "denom_guard", minimum=0, strict=True)


class GramSplit(NamedTuple):
    """ Elementwise positive and negative parts of X^T X; pos - neg == X^T X. """
    pos: np.ndarray
    neg: np.ndarray


@dataclass
class SolveTrace:
    """
    Per-iteration record of a multiplicative-update solve.

    objective_per_iter holds the objective of the initialization followed by one value per
    iteration (length iterations + 1). The delta lists hold max|change| per iteration.
    """

    objective_per_iter: List[float] = field(default_factory=list)
    s_delta_per_iter: List[float] = field(default_factory=list)
    v_delta_per_iter: List[float] = field(default_factory=list)
    iterations: int = 0
    terminated_by: str = "max_iter"
    wall_time_ms: float = 0.0

    @property
    def converged(self):
        return self.terminated_by == "tolerance"

    @property
    def ms_per_iter(self):
        return self.wall_time_ms / max(self.iterations, 1)

    def is_monotone(self, slack=config.monotone_slack):
        """ True if every objective value is at most the previous one plus slack * (1 + |previous|). """

        values = self.objective_per_iter
        return all(b <= a + slack * (1 + abs(a)) for a, b in zip(values[:-1], values[1:]))


###############################################################################
# ------------------------------- Operations -------------------------------- #
###############################################################################

def _check_shapes(x, w, s, v):
    n = x.shape[1]
    if w.shape != (n, n) or s.shape != (n, n) or v.shape[0] != n:
        raise ShapeError(f"Shapes do not conform: X {x.shape}, W {w.shape}, S {s.shape}, V {v.shape}. "
                         f"Expected W and S to be ({n}, {n}) and V to have {n} rows.")


def gram_split(x):
    """ Split X^T X into its positive part (|X^T X| + X^T X)/2 and negative part (|X^T X| - X^T X)/2. """

    x = dense.as_matrix(x, name="x")
    gram = dense.matmul(dense.transpose(x), x)

    return GramSplit(pos=dense.positive_part(gram), neg=dense.negative_part(gram))


def objective_value(x, w, s, v, cfg):
    """
    Objective alpha ||X - XS||_F^2 + ||S - VV^T||_F^2 + beta ||S - W||_F^2.

    Returns
    -------
    float
        Nonnegative objective value.
    """

    _check_shapes(x, w, s, v)

    self_expression = dense.frobenius_norm_sq(x - dense.matmul(x, s))
    factorization = dense.frobenius_norm_sq(s - dense.matmul(v, dense.transpose(v)))
    prior = dense.frobenius_norm_sq(s - w)

    return cfg.alpha * self_expression + factorization + cfg.beta * prior


def _similarity_ratio(s, v, split, w, cfg):
    """ Numerator / denominator of the S update (before the square root). """

    a, b = cfg.alpha, cfg.beta
    numerator = dense.matmul(v, dense.transpose(v)) + a * split.pos + a * dense.matmul(split.neg, s) + b * w
    denominator = s + a * dense.matmul(split.pos, s) + a * split.neg + b * s

    return dense.safe_divide(numerator, denominator, cfg.denom_guard)


def _membership_ratio(s, v, cfg):
    """ Numerator / denominator of the V update (before the fourth root). """

    numerator = dense.matmul(s, v) + dense.matmul(dense.transpose(s), v)
    denominator = 2.0 * dense.matmul(v, dense.matmul(dense.transpose(v), v))  # V(V^T V): O(nc^2)

    return dense.safe_divide(numerator, denominator, cfg.denom_guard)


def update_similarity(s, v, split, w, cfg):
    """
    One multiplicative update of S with V fixed.

    S <- S * sqrt((VV^T + a(X^TX)+ + a(X^TX)- S + bW) / (S + a(X^TX)+ S + a(X^TX)- + bS + guard))

    A zero diagonal stays exactly zero since it is multiplied by a finite ratio.
    """

    ratio = _similarity_ratio(s, v, split, w, cfg)
    return dense.hadamard(s, np.sqrt(ratio))


def update_membership(s, v, cfg):
    """
    One multiplicative update of V with S fixed.

    V <- V * ((SV + S^T V) / (2 VV^T V + guard))^(1/4)
    """

    ratio = _membership_ratio(s, v, cfg)
    return dense.hadamard(v, np.power(ratio, 0.25))


def assign_clusters(v):
    """ Label of each sample: the column of the largest entry in its row of V (ties: smallest column). """
    return np.argmax(np.asarray(v), axis=1)


def stationarity_residual(s, v, split, w, cfg, weighted=False, s_floor=1e-6):
    """
    Distance of (S, V) from a fixed point of the multiplicative updates.

    The update ratios (the bracketed factors of the S and V rules) equal 1 at a fixed point.

    Parameters
    ----------
    weighted : bool, default False
        If False, return the plain max |ratio - 1| over entries with S_ij > s_floor and all entries of V.
        If True, return max over the same entries of x * |ratio - 1| for x in S and V (the complementarity
        form). Entries of V decaying towards zero keep a ratio below 1, so only this form becomes small
        at a boundary fixed point.
    s_floor : float, default 1e-6
        Entries of S at or below this value are ignored.

    Returns
    -------
    float
    """

    s_ratio = _similarity_ratio(s, v, split, w, cfg)
    v_ratio = _membership_ratio(s, v, cfg)

    active = np.asarray(s) > s_floor
    if weighted:
        s_part = (np.asarray(s) * np.abs(s_ratio - 1))[active]
        v_part = np.asarray(v) * np.abs(v_ratio - 1)
    else:
        s_part = np.abs(s_ratio - 1)[active]
        v_part = np.abs(v_ratio - 1)

    s_res = float(s_part.max()) if s_part.size > 0 else 0.0
    return max(s_res, float(v_part.max()))


def initialize_factors(n, cfg):
    """ Random strictly positive V (n x c) and S (n x n, zero diagonal), uniform on (0, 1), drawn from cfg.seed. """

    rng = np.random.default_rng(cfg.seed)
    low = np.finfo(np.float64).tiny  # excludes 0
    v = rng.uniform(low, 1.0, size=(n, cfg.n_clusters))
    s = rng.uniform(low, 1.0, size=(n, n))

    return dense.zero_diagonal(s), dense.as_matrix(v, name="V")


def solve(x, w, cfg, logger=None):
    """
    Jointly learn the similarity matrix S and membership matrix V.

    Alternates the S update and the V update until max|dS| < tol and max|dV| < tol (measured after
    each full sweep), or until cfg.max_iter iterations.

    Parameters
    ----------
    x : array-like, shape (d, n)
        Data matrix with one sample per column.
    w : array-like, shape (n, n)
        Normalized prior affinity.
    cfg : SolverConfig
    logger : logging.Logger, optional

    Returns
    -------
    s : numpy.ndarray, shape (n, n)
    v : numpy.ndarray, shape (n, c)
    trace : SolveTrace

    Raises
    ------
    NumericalError
        If a non-finite value appears; the exception carries the iteration index.
    """

    logger = _get_logger(logger)

    x = dense.as_matrix(x, name="x")
    w = dense.as_matrix(w, name="W")
    n = x.shape[1]
    if w.shape != (n, n):
        raise ShapeError(f"W must be ({n}, {n}) to match X {x.shape}, but has shape {w.shape}.")
    if cfg.n_clusters > n:
        raise ConfigError(f"Invalid value for 'n_clusters' parameter: '{cfg.n_clusters}'. Must be <= n = {n}.")

    start = time.perf_counter()
    split = gram_split(x)  # computed once, outside the loop
    s, v = initialize_factors(n, cfg)

    trace = SolveTrace()
    trace.objective_per_iter.append(objective_value(x, w, s, v, cfg))
    logger.debug(f"Initial objective: {trace.objective_per_iter[0]:.6g}")

    for t in range(1, cfg.max_iter + 1):
        try:
            s_new = update_similarity(s, v, split, w, cfg)
            v_new = update_membership(s_new, v, cfg)
            objective = objective_value(x, w, s_new, v_new, cfg)
        except NumericalError as e:
            raise NumericalError(f"Non-finite value in iteration {t} of the joint solver ({e}).", iteration=t)

        s_delta = dense.max_abs(s_new - s)
        v_delta = dense.max_abs(v_new - v)
        s, v = s_new, v_new

        trace.objective_per_iter.append(objective)
        trace.s_delta_per_iter.append(s_delta)
        trace.v_delta_per_iter.append(v_delta)
        trace.iterations = t
        logger.debug(f"Iteration {t}: objective={objective:.8g}, max|dS|={s_delta:.3g}, max|dV|={v_delta:.3g}")

        if s_delta < cfg.tol and v_delta < cfg.tol:
            trace.terminated_by = "tolerance"
            break

    trace.wall_time_ms = (time.perf_counter() - start) * 1000.0

    if trace.converged:
        logger.debug(f"Converged after {trace.iterations} iterations")
    else:
        logger.warning(f"Joint solver reached max_iter={cfg.max_iter} without meeting tol={cfg.tol:g}.")

    return s, v, trace


def ideal_similarity(truth):
    """
    Block-diagonal similarity from ground-truth labels: 1 for pairs with the same label, 0 otherwise.

    The diagonal is 0 to stay inside the feasible set of S.
    """

    truth = np.asarray(truth)
    if truth.ndim != 1 or truth.size == 0:
        raise InputError("Labels must be a non-empty one-dimensional sequence.")

    ideal = (truth[:, None] == truth[None, :]).astype(np.float64)
    np.fill_diagonal(ideal, 0.0)

    return dense.as_matrix(ideal, name="S*")


def similarity_agreement(s, truth):
    """ Fraction of the total mass of S placed on same-label pairs (1.0 for a block-diagonal S). """

    s = np.asarray(s)
    mask = np.asarray(ideal_similarity(truth)) > 0
    if s.shape != mask.shape:
        raise ShapeError(f"S has shape {s.shape}, but {mask.shape[0]} labels were given.")

    total = s.sum()
    if total <= 0:
        return 0.0
    return float(s[mask].sum() / total)


###############################################################################
# ---------------------------- Estimator class ------------------------------ #
###############################################################################

class JointSolver():
    """ Clusterer that learns the similarity graph and the membership matrix jointly. """

    def __init__(self, alpha=1.0, beta=1.0, n_clusters=2, tol=config.tolerance, max_iter=config.max_iter,
                 seed=0, denom_guard=config.denom_guard, verbosity=0):

        self.config = SolverConfig(alpha=alpha, beta=beta, n_clusters=n_clusters, tol=tol,
                                   max_iter=max_iter, seed=seed, denom_guard=denom_guard)
        self.logger = setup_logger(self.__class__.__name__, verbosity)

        self.affinity_ = None
        self.similarity_ = None
        self.membership_ = None
        self.labels_ = None
        self.trace_ = None

    def fit(self, x, w=None, graph_config=None):
        """
        Fit the model.

        Parameters
        ----------
        x : array-like, shape (d, n)
            Data matrix with one sample per column.
        w : array-like, shape (n, n), optional
            Normalized prior affinity. If None, it is built from x with graph_config.
        graph_config : GraphConfig, optional
            Used only when w is None. Defaults to GraphConfig().

        Returns
        -------
        self
        """

        if w is None:
            w = build_affinity(x, graph_config or GraphConfig(), logger=self.logger)

        cfg = self.config
        self.logger.info(f"Solving joint model (alpha={cfg.alpha:g}, beta={cfg.beta:g}, c={cfg.n_clusters}, seed={cfg.seed})")
        s, v, trace = solve(x, w, cfg, logger=self.logger)

        self.affinity_ = w
        self.similarity_ = s
        self.membership_ = v
        self.labels_ = assign_clusters(v)
        self.trace_ = trace
        self.logger.info(f"Finished after {trace.iterations} iterations ({trace.terminated_by}); "
                         f"objective {trace.objective_per_iter[-1]:.6g}")

        return self

    def fit_predict(self, x, w=None, graph_config=None):
        return self.fit(x, w=w, graph_config=graph_config).labels_


def _rescale(matrix):
    """ Min-max rescaling to [0, 1]; a constant matrix becomes all zeros. """

    matrix = np.asarray(matrix, dtype=np.float64)
    low, high = matrix.min(), matrix.max()
    if high == low:
        return np.zeros_like(matrix)
    return (matrix - low) / (high - low)


def export_matrices(path_prefix, w, s, v):
    """
    Save the prior affinity W, the learned similarity S and the reconstruction VV^T, each rescaled to [0, 1].

    Parameters
    ----------
    path_prefix : str
        Files are written to <path_prefix>_W.npy, <path_prefix>_S.npy and <path_prefix>_VVt.npy.

    Returns
    -------
    list of str
        The written paths.
    """

    matrices = {"W": w, "S": s, "VVt": dense.matmul(np.asarray(v), dense.transpose(np.asarray(v)))}

    paths = []
    for key, matrix in matrices.items():
        path = f"{path_prefix}_{key}.npy"
        np.save(path, _rescale(matrix))
        paths.append(path)

    return paths
