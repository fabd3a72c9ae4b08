import json
import os
import numpy as np
import pytest
from unittest.mock import patch

import jointgraph
import jointgraph.cli
from jointgraph.utils import NumericalError


def run_cli(arguments):
    """ Run the command line with the given argument string and return the exit code (0 if main returns). """

    with patch('sys.argv', ["jointgraph"] + arguments.split()):
        try:
            jointgraph.cli.main()
        except SystemExit as e:
            return 0 if e.code is None else e.code
    return 0


def json_lines(output):
    """ Parse the JSON lines printed to stdout, skipping log messages. """
    return [json.loads(line) for line in output.splitlines() if line.startswith("{")]


@pytest.fixture
def blobs_csv(tmp_path):
    """ Two well separated blobs written through the synth command. """

    path = str(tmp_path / "blobs.csv")
    code = run_cli(f"synth --sizes 10,10 --dim 2 --scale 10 --noise 0.5 --seed 1 --out {path} --verbosity 0")
    assert code == 0
    return path


def test_no_arguments(capsys):
    """ Test that calling without arguments prints the help """

    assert run_cli("") == 0
    assert "usage" in capsys.readouterr().out


def test_version(capsys):
    assert run_cli("--version") == 0
    assert jointgraph.__version__ in capsys.readouterr().out


@pytest.mark.parametrize("arguments", ["cluster --unknown-flag",
                                       "cluster --method spectral",
                                       "synth --sizes 5,5",
                                       "cluster --verbosity 5 --data iris"])
def test_usage_errors(arguments):
    assert run_cli(arguments) == 1


def test_synth(blobs_csv):
    with open(blobs_csv) as f:
        rows = [line for line in f if line.strip() != ""]

    assert len(rows) == 20
    assert len(rows[0].split(",")) == 3


def test_synth_invalid_sizes(tmp_path):
    assert run_cli(f"synth --sizes 5,0 --out {tmp_path / 'x.csv'}") == 1


#####################################################################
# cluster
#####################################################################

@pytest.mark.parametrize("method", ["joint", "symnmf", "kmeans"])
def test_cluster_prints_metrics(blobs_csv, capsys, method):
    code = run_cli(f"cluster --data {blobs_csv} --method {method} --alpha 0.01 --verbosity 0")
    assert code == 0

    output = json_lines(capsys.readouterr().out)[-1]
    assert output["method"] == method
    assert output["dataset"] == "blobs"
    assert set(output) >= {"acc", "nmi", "pur", "ari"}
    assert 0 <= output["acc"] <= 1
    assert ("graph_agreement" in output) == (method == "joint")
    if method == "joint":
        assert 0.5 <= output["graph_agreement"] <= 1


def test_cluster_outputs(blobs_csv, tmp_path):
    """ Test that labels, trace and matrices are written """

    labels = str(tmp_path / "labels.txt")
    trace = str(tmp_path / "trace.csv")
    prefix = str(tmp_path / "blobs")

    code = run_cli(f"cluster --data {blobs_csv} --alpha 0.01 --out {labels} --trace {trace} --export-matrices {prefix} --verbosity 0")
    assert code == 0

    assert len(np.loadtxt(labels, dtype=int)) == 20
    with open(trace) as f:
        assert f.readline().strip() == "iteration,objective,s_delta,v_delta"
    for name in ["W", "S", "VVt"]:
        matrix = np.load(f"{prefix}_{name}.npy")
        assert matrix.shape == (20, 20)
        assert matrix.min() >= 0 and matrix.max() <= 1


@pytest.mark.parametrize("arguments, expected", [("--max-iter 1", 1),
                                                 ("", 300)])
def test_cluster_kmeans_max_iter(blobs_csv, monkeypatch, arguments, expected):
    """ Test that the iteration limit reaches k-means """

    created = []

    class RecordingKMeans(jointgraph.cli.KMeans):
        def __init__(self, **kwargs):
            super().__init__(**kwargs)
            created.append(self)

    monkeypatch.setattr(jointgraph.cli, "KMeans", RecordingKMeans)
    assert run_cli(f"cluster --data {blobs_csv} --method kmeans {arguments} --verbosity 0") == 0

    assert created[0].config.max_iter == expected
    assert created[0].n_iter_ <= expected


def test_cluster_trace_kmeans(blobs_csv, tmp_path):
    """ k-means has no objective trace; asking for one is a configuration error """

    assert run_cli(f"cluster --data {blobs_csv} --method kmeans --trace {tmp_path / 'trace.csv'}") == 1


def test_cluster_missing_data(tmp_path):
    assert run_cli(f"cluster --data {tmp_path / 'missing.csv'}") == 2


def test_cluster_no_data():
    assert run_cli("cluster --method joint") == 1


def test_cluster_malformed_data(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2,a\n3,x,b\n")

    assert run_cli(f"cluster --data {path}") == 2


def test_cluster_unlabeled_needs_clusters(tmp_path, capsys):
    path = tmp_path / "unlabeled.csv"
    path.write_text("0,0\n0,1\n10,10\n10,11\n")

    assert run_cli(f"cluster --data {path} --labels none --p 1") == 1
    assert run_cli(f"cluster --data {path} --labels none --p 1 --clusters 2 --verbosity 0") == 0
    assert json_lines(capsys.readouterr().out) == []


def test_cluster_numerical_error(blobs_csv, monkeypatch):
    """ Test that a numerical failure exits with code 3 """

    def fail(self, x, w=None, graph_config=None):
        raise NumericalError("Non-finite value in S", iteration=4)

    monkeypatch.setattr(jointgraph.cli.JointSolver, "fit_predict", fail)
    assert run_cli(f"cluster --data {blobs_csv}") == 3


#####################################################################
# grid and bench
#####################################################################

def test_grid(blobs_csv, tmp_path, capsys):
    out = str(tmp_path / "grid.json")
    code = run_cli(f"grid --data {blobs_csv} --alphas 0.01,0.1 --betas 1 --trials 2 --out {out} --format json --verbosity 0")
    assert code == 0

    best = json_lines(capsys.readouterr().out)[-1]
    assert best["best_alpha"] in (0.01, 0.1)
    assert best["best_beta"] == 1

    with open(out) as f:
        table = json.load(f)
    assert len(table) == 2
    assert {"alpha", "beta", "acc", "failed"} <= set(table[0])


def test_grid_config_file(blobs_csv, tmp_path, capsys):
    """ Test that explicit flags overwrite values from the config file """

    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({"data": blobs_csv, "alpha_grid": [0.01], "beta_grid": [1, 10], "trials": 2}))

    code = run_cli(f"grid --config {config_path} --betas 10 --verbosity 0")
    assert code == 0

    best = json_lines(capsys.readouterr().out)[-1]
    assert (best["best_alpha"], best["best_beta"]) == (0.01, 10)


@pytest.mark.parametrize("content", ['{"data": "iris", "colour": "red"}',   # unknown key
                                     '{"alpha_grid": [1]}',                  # no data
                                     '{"data": "iris", "trials": 0}',        # invalid value
                                     '{"data": '])                           # not json
def test_grid_invalid_config(tmp_path, content):
    config_path = tmp_path / "config.json"
    config_path.write_text(content)

    assert run_cli(f"grid --config {config_path}") == 1


def test_bench(blobs_csv, tmp_path, capsys):
    out = str(tmp_path / "bench.csv")
    code = run_cli(f"bench --data {blobs_csv} --alphas 0.01 --betas 1 --trials 2 --out {out} --verbosity 0")
    assert code == 0

    lines = json_lines(capsys.readouterr().out)
    summary = lines.pop()["summary"]
    assert len(lines) == 8  # two baselines times four metrics
    assert {line["method_b"] for line in lines} == {"symnmf", "kmeans"}
    assert all(line["verdict"] in ("better", "worse", "no_difference") for line in lines)

    assert os.path.exists(out)
    assert os.path.exists(str(tmp_path / "bench_comparisons.csv"))
    with open(out) as f:
        assert f.readline().strip() == "dataset,method,alpha,beta,metric,mean,std,trials"

    verdicts = summary["verdicts"]
    assert sum(verdicts[key]["count"] for key in ["better", "no_difference", "worse"]) == 8
    assert sum(summary["rank"]["acc"].values()) == 1
    with open(tmp_path / "bench_summary.json") as f:
        assert json.load(f) == summary


def test_bench_format_from_extension(blobs_csv, tmp_path):
    """ Test that the report format follows the file extension when --format is not given """

    out = str(tmp_path / "bench.json")
    code = run_cli(f"bench --data {blobs_csv} --methods joint,kmeans --alphas 0.01 --betas 1 --trials 2 --out {out} --verbosity 0")
    assert code == 0

    with open(out) as f:
        assert len(json.load(f)) == 2 * 4
    with open(tmp_path / "bench_comparisons.json") as f:
        assert len(json.load(f)) == 4


def test_bench_baselines_only(blobs_csv, tmp_path, capsys):
    out = str(tmp_path / "bench.json")
    code = run_cli(f"bench --data {blobs_csv} --methods kmeans --trials 3 --out {out} --format json --verbosity 0")
    assert code == 0

    assert json_lines(capsys.readouterr().out) == []
    with open(out) as f:
        records = json.load(f)
    assert len(records) == 4
    assert all(record["method"] == "kmeans" and record["trials"] == 3 for record in records)
    assert not os.path.exists(str(tmp_path / "bench_comparisons.json"))
