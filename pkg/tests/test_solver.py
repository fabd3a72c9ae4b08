import numpy as np
import pytest

from jointgraph import dense, solver
from jointgraph.graph import build_affinity
from jointgraph.metrics import accuracy
from jointgraph.solver import JointSolver, SolverConfig
from jointgraph.utils import ConfigError, NumericalError, ShapeError


def two_blobs(seed=0, per_cluster=10, spread=0.05):
    """ Two clusters around (0, 0) and (1, 1) with one sample per column. """

    rng = np.random.default_rng(seed)
    first = rng.normal(0, spread, size=(2, per_cluster))
    second = rng.normal(0, spread, size=(2, per_cluster)) + 1
    truth = np.repeat([0, 1], per_cluster)

    return np.hstack([first, second]), truth


def random_instance(seed, n=15, d=5, c=3, alpha=1.0, beta=1.0):
    """ Random signed data, its normalized affinity and initial factors. """

    rng = np.random.default_rng(seed)
    x = dense.as_matrix(rng.normal(size=(d, n)))
    w = build_affinity(x)
    cfg = SolverConfig(alpha=alpha, beta=beta, n_clusters=c, seed=seed)
    s, v = solver.initialize_factors(n, cfg)

    return x, w, s, v, cfg


#####################################################################
# Configuration
#####################################################################

@pytest.mark.parametrize("params, valid",
                         [({}, True),
                          ({"alpha": 0, "beta": 0}, True),
                          ({"alpha": "10", "n_clusters": "3"}, True),
                          ({"seed": 2**64 - 1}, True),
                          ({"alpha": -1}, False),
                          ({"beta": float("nan")}, False),
                          ({"n_clusters": 1}, False),
                          ({"tol": 0}, False),
                          ({"max_iter": 0}, False),
                          ({"seed": -1}, False),
                          ({"seed": 2**64}, False),
                          ({"denom_guard": 0}, False)])
def test_solver_config(params, valid):
    """ Test that solver parameters are validated """

    if valid:
        SolverConfig(**params)
    else:
        with pytest.raises(ConfigError, match="Invalid value for"):
            SolverConfig(**params)


@pytest.mark.parametrize("verbosity, valid",
                         [(0, True),
                          (1, True),
                          (2, True),
                          (3, False),
                          ("invalid", False),
                          (False, False)])
def test_verbosity(verbosity, valid):
    """ Test that the logger levels are validated """

    if valid:
        _ = JointSolver(verbosity=verbosity)
    else:
        with pytest.raises(ValueError):
            _ = JointSolver(verbosity=verbosity)


#####################################################################
# Gram split and objective
#####################################################################

def test_gram_split_by_hand():
    split = solver.gram_split([[1, -1]])

    assert np.array_equal(split.pos, [[1, 0], [0, 1]])
    assert np.array_equal(split.neg, [[0, 1], [1, 0]])


def test_gram_split_nonnegative_data():
    x = np.random.default_rng(0).uniform(size=(4, 6))
    assert np.all(solver.gram_split(x).neg == 0)


def test_gram_split_reconstruction():
    x = np.random.default_rng(1).normal(size=(5, 6))
    split = solver.gram_split(x)

    assert np.all(split.pos >= 0) and np.all(split.neg >= 0)
    assert np.max(np.abs(split.pos - split.neg - x.T @ x)) < 1e-12
    assert np.max(np.abs(split.pos * split.neg)) < 1e-12


def test_objective_diagonal_mismatch():
    """ With alpha = beta = 0 and S the zero-diagonal part of VV^T, only the diagonal of VV^T is left over """

    rng = np.random.default_rng(2)
    v = dense.as_matrix(rng.uniform(0.1, 1, size=(6, 2)))
    vvt = dense.matmul(v, dense.transpose(v))
    s = dense.zero_diagonal(vvt)
    x = dense.as_matrix(rng.normal(size=(3, 6)))

    value = solver.objective_value(x, s, s, v, SolverConfig(alpha=0, beta=0))
    assert value == pytest.approx(np.sum(np.diag(vvt) ** 2), rel=1e-12)


def test_objective_perfect_fit():
    rng = np.random.default_rng(3)
    v = dense.as_matrix(rng.uniform(0.1, 1, size=(5, 2)))
    s = dense.matmul(v, dense.transpose(v))
    x = dense.as_matrix(rng.normal(size=(3, 5)))

    assert solver.objective_value(x, s, s, v, SolverConfig(alpha=0, beta=2)) == 0


def test_objective_terms():
    """ Test the objective against a term-by-term recomputation """

    x, w, s, v, cfg = random_instance(4, alpha=0.5, beta=3)
    xs, s, v, w = np.asarray(x), np.asarray(s), np.asarray(v), np.asarray(w)

    expected = (0.5 * np.sum((xs - xs @ s) ** 2) + np.sum((s - v @ v.T) ** 2) + 3 * np.sum((s - w) ** 2))
    assert abs(solver.objective_value(x, w, s, v, cfg) - expected) <= 1e-10 * max(1.0, expected)


def test_objective_shape_error():
    x, w, s, v, cfg = random_instance(5)
    with pytest.raises(ShapeError):
        solver.objective_value(x, w[:-1, :-1], s, v, cfg)


#####################################################################
# Updates
#####################################################################

def test_update_similarity_fixed_point():
    """ With alpha = beta = 0, an S matching VV^T off the diagonal does not move """

    rng = np.random.default_rng(6)
    v = dense.as_matrix(rng.uniform(0.1, 1, size=(6, 2)))
    s = dense.zero_diagonal(dense.matmul(v, dense.transpose(v)))
    x = dense.as_matrix(rng.normal(size=(3, 6)))
    cfg = SolverConfig(alpha=0, beta=0)

    s_new = solver.update_similarity(s, v, solver.gram_split(x), s, cfg)
    assert np.allclose(s_new, s, rtol=1e-10, atol=0)


def test_update_membership_fixed_point():
    rng = np.random.default_rng(7)
    v = dense.as_matrix(rng.uniform(0.1, 1, size=(6, 3)))
    s = dense.matmul(v, dense.transpose(v))

    v_new = solver.update_membership(s, v, SolverConfig())
    assert np.allclose(v_new, v, rtol=1e-10, atol=0)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("alpha, beta", [(0, 0), (0.1, 1), (1, 1), (10, 0.1), (100, 100)])
def test_single_updates_descend(seed, alpha, beta):
    """ Each half-step alone does not increase the objective """

    x, w, s, v, cfg = random_instance(seed, alpha=alpha, beta=beta)
    split = solver.gram_split(x)
    slack = 1e-9

    before = solver.objective_value(x, w, s, v, cfg)
    s_new = solver.update_similarity(s, v, split, w, cfg)
    after_s = solver.objective_value(x, w, s_new, v, cfg)
    assert after_s <= before + slack * (1 + abs(before))

    v_new = solver.update_membership(s_new, v, cfg)
    after_v = solver.objective_value(x, w, s_new, v_new, cfg)
    assert after_v <= after_s + slack * (1 + abs(after_s))

    assert np.all(np.diag(s_new) == 0)
    assert np.all(v_new > 0)


def test_sign_and_diagonal_every_iteration():
    """ V stays strictly positive and S nonnegative with an exactly zero diagonal """

    x, w, s, v, cfg = random_instance(8, n=25, c=4, alpha=10, beta=0.1)
    split = solver.gram_split(x)

    for _ in range(200):
        s = solver.update_similarity(s, v, split, w, cfg)
        v = solver.update_membership(s, v, cfg)

        assert np.min(v) > 0
        assert np.min(s) >= 0
        assert np.all(np.diag(s) == 0)


def test_assign_clusters():
    assert list(solver.assign_clusters([[0.9, 0.1], [0.2, 0.8]])) == [0, 1]
    assert list(solver.assign_clusters([[0.5, 0.5]])) == [0]

    v = np.random.default_rng(9).uniform(size=(10, 3))
    scaled = v * np.random.default_rng(10).uniform(0.1, 10, size=(10, 1))
    assert np.array_equal(solver.assign_clusters(v), solver.assign_clusters(scaled))


#####################################################################
# Stationarity
#####################################################################

@pytest.mark.parametrize("weighted", [True, False])
def test_stationarity_exact_fixed_point(weighted):
    rng = np.random.default_rng(11)
    v = dense.as_matrix(rng.uniform(0.1, 1, size=(6, 2)))
    s = dense.matmul(v, dense.transpose(v))
    x = dense.as_matrix(rng.normal(size=(3, 6)))
    cfg = SolverConfig(alpha=0, beta=0, denom_guard=1e-15)

    residual = solver.stationarity_residual(s, v, solver.gram_split(x), s, cfg, weighted=weighted)
    assert residual < 1e-12


def test_stationarity_boundary_point():
    """ A V entry decaying towards zero keeps the plain residual large but not the weighted one """

    v = dense.as_matrix([[1, 1e-9], [1, 1e-9], [1e-9, 1], [1e-9, 1]])
    s = dense.as_matrix(np.kron(np.eye(2), np.ones((2, 2))))
    split = solver.gram_split(np.ones((1, 4)))
    cfg = SolverConfig(alpha=0, beta=0, denom_guard=1e-15)

    plain = solver.stationarity_residual(s, v, split, s, cfg)
    assert plain == solver.stationarity_residual(s, v, split, s, cfg, weighted=False)
    assert plain == pytest.approx(2 / 3, rel=1e-6)
    assert solver.stationarity_residual(s, v, split, s, cfg, weighted=True) < 1e-8


def test_stationarity_at_initialization():
    x, w, s, v, cfg = random_instance(12, n=20)
    assert solver.stationarity_residual(s, v, solver.gram_split(x), w, cfg) > 0.1


#####################################################################
# Solve
#####################################################################

def test_solve_two_blobs():
    x, truth = two_blobs()
    w = build_affinity(x)
    cfg = SolverConfig(alpha=0.01, beta=1, n_clusters=2, seed=0)

    s, v, trace = solver.solve(x, w, cfg)

    assert accuracy(solver.assign_clusters(v), truth) == 1.0
    assert trace.is_monotone()
    assert len(trace.objective_per_iter) == trace.iterations + 1
    assert len(trace.s_delta_per_iter) == trace.iterations


def test_solve_deterministic():
    x, _ = two_blobs(seed=1)
    w = build_affinity(x)
    cfg = SolverConfig(n_clusters=2, seed=123, max_iter=50)

    s1, v1, trace1 = solver.solve(x, w, cfg)
    s2, v2, trace2 = solver.solve(x, w, cfg)

    assert np.array_equal(s1, s2)
    assert np.array_equal(v1, v2)
    assert trace1.objective_per_iter == trace2.objective_per_iter
    assert trace1.v_delta_per_iter == trace2.v_delta_per_iter


def test_solve_max_iter_warning(caplog):
    x, _ = two_blobs()
    w = build_affinity(x)
    _, _, trace = solver.solve(x, w, SolverConfig(n_clusters=2, max_iter=3))

    assert trace.iterations == 3
    assert trace.terminated_by == "max_iter"
    assert not trace.converged
    assert "max_iter" in caplog.text


def test_solve_degenerate_weights():
    """ alpha = beta = 0 still runs and descends towards the factorization residual """

    x, _ = two_blobs(seed=2)
    w = build_affinity(x)
    cfg = SolverConfig(alpha=0, beta=0, n_clusters=2, max_iter=200)
    s, v, trace = solver.solve(x, w, cfg)

    assert trace.is_monotone()
    assert trace.objective_per_iter[-1] == pytest.approx(dense.frobenius_norm_sq(s - np.asarray(v) @ np.asarray(v).T), rel=1e-9)


def test_solve_too_many_clusters():
    x, _ = two_blobs()
    with pytest.raises(ConfigError, match="n_clusters"):
        solver.solve(x, build_affinity(x), SolverConfig(n_clusters=21))


def test_solve_shape_error():
    x, _ = two_blobs()
    w = build_affinity(x[:, :10])
    with pytest.raises(ShapeError):
        solver.solve(x, w, SolverConfig())


def test_solve_overflow():
    """ Non-finite intermediate values raise a NumericalError """

    x = np.full((2, 4), 1e200)
    w = np.ones((4, 4)) - np.eye(4)
    with pytest.raises(NumericalError):
        solver.solve(x, w, SolverConfig())


#####################################################################
# Similarity structure
#####################################################################

def test_ideal_similarity():
    ideal = solver.ideal_similarity([0, 0, 1])

    assert np.array_equal(ideal, [[0, 1, 0], [1, 0, 0], [0, 0, 0]])
    assert solver.similarity_agreement(ideal + np.eye(3), [0, 0, 1]) == pytest.approx(2 / 5)
    assert solver.similarity_agreement(ideal, [0, 0, 1]) == 1.0
    assert solver.similarity_agreement(np.zeros((3, 3)), [0, 0, 1]) == 0.0


#####################################################################
# Estimator class and exports
#####################################################################

def test_joint_solver_fit():
    x, truth = two_blobs()
    model = JointSolver(alpha=0.01, beta=1, n_clusters=2, seed=0)
    labels = model.fit_predict(x)

    assert model.affinity_.shape == (20, 20)
    assert model.similarity_.shape == (20, 20)
    assert model.membership_.shape == (20, 2)
    assert np.array_equal(labels, model.labels_)
    assert accuracy(labels, truth) == 1.0


def test_export_matrices(tmp_path):
    x, _ = two_blobs()
    model = JointSolver(n_clusters=2, max_iter=20).fit(x)

    paths = solver.export_matrices(str(tmp_path / "blobs"), model.affinity_, model.similarity_, model.membership_)

    assert [p.split("_")[-1] for p in paths] == ["W.npy", "S.npy", "VVt.npy"]
    for path in paths:
        matrix = np.load(path)
        assert matrix.shape == (20, 20)
        assert matrix.min() == 0 and matrix.max() == 1


#####################################################################
# Acceptance runs
#####################################################################

def replay(x, w, cfg):
    """ Step the solver loop by hand, yielding (S, V) after the initialization and after every iteration. """

    split = solver.gram_split(x)
    s, v = solver.initialize_factors(x.shape[1], cfg)
    yield s, v

    for _ in range(cfg.max_iter):
        s_new = solver.update_similarity(s, v, split, w, cfg)
        v_new = solver.update_membership(s_new, v, cfg)
        done = dense.max_abs(s_new - s) < cfg.tol and dense.max_abs(v_new - v) < cfg.tol
        s, v = s_new, v_new
        yield s, v

        if done:
            break


@pytest.mark.slow
def test_monotone_random_instances():
    """ Descent and sign preservation in every iteration on 50 random instances """

    rng = np.random.default_rng(2024)
    grid = [(a, b) for a in [0.1, 1, 10] for b in [0.1, 1, 10]]

    for instance in range(50):
        n, d, c = int(rng.integers(20, 61)), int(rng.integers(5, 21)), int(rng.integers(2, 6))
        alpha, beta = grid[instance % len(grid)]

        x = dense.as_matrix(rng.normal(size=(d, n)))
        w = build_affinity(x)
        cfg = SolverConfig(alpha=alpha, beta=beta, n_clusters=c, seed=instance, max_iter=300)
        offdiag = ~np.eye(n, dtype=bool)

        objectives = []
        for s, v in replay(x, w, cfg):
            assert np.min(v) > 0
            assert np.min(s[offdiag]) >= 0
            assert np.all(np.diag(s) == 0)
            objectives.append(solver.objective_value(x, w, s, v, cfg))

        s_final, v_final, trace = solver.solve(x, w, cfg)
        assert trace.objective_per_iter == objectives
        assert trace.is_monotone()
        assert np.array_equal(s, s_final) and np.array_equal(v, v_final)


@pytest.mark.slow
def test_converged_runs_are_stationary():
    """ Converged runs sit at a fixed point in the complementarity sense """

    for seed in range(20):
        x, _ = two_blobs(seed=seed, per_cluster=20)
        w = build_affinity(x)
        cfg = SolverConfig(alpha=1, beta=1, n_clusters=2, seed=seed)
        s, v, trace = solver.solve(x, w, cfg)
        assert trace.converged

        split = solver.gram_split(x)
        assert solver.stationarity_residual(s, v, split, w, cfg, weighted=True) < 1e-2


@pytest.mark.slow
def test_convergence_speed():
    """ Blobs with n=300 and c=4 converge within 300 iterations in at least 18 of 20 runs """

    from jointgraph.datasets import make_blobs
    from jointgraph.graph import unit_scale

    fired = 0
    for seed in range(20):
        dataset = make_blobs([75, 75, 75, 75], 10, centers_scale=10, noise_sigma=1.0, seed=seed)
        x = unit_scale(dataset.x)
        w = build_affinity(x)
        _, _, trace = solver.solve(x, w, SolverConfig(alpha=1, beta=1, n_clusters=4, seed=seed, max_iter=300))
        fired += trace.converged

    assert fired >= 18


@pytest.mark.slow
def test_iteration_cost_scaling():
    """ Time per iteration grows no worse than cubically from n=100 to n=400 """

    from jointgraph.datasets import make_blobs

    per_iter = {}
    for n in [100, 400]:
        dataset = make_blobs([n // 4] * 4, 5, seed=0)
        w = build_affinity(dataset.x)
        cfg = SolverConfig(n_clusters=4, tol=1e-300, max_iter=20)
        _, _, trace = solver.solve(dataset.x, w, cfg)
        per_iter[n] = trace.ms_per_iter

    assert per_iter[400] / per_iter[100] <= 96
