import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from spinn import cli, io
from spinn.exceptions import ValidationError
from spinn.network import NetworkArchitecture, NetworkParameters, forward
from spinn.penalty import PenaltyConfig
from spinn.simulation import truth_function


def run(*argv):
    return cli.main([str(a) for a in argv])


def write_config(path, **cfg):
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture
def sim_dir(tmp_path):
    out = tmp_path / "sim"
    assert run("simulate", "--scenario", "teacher", "--n", 120, "--p", 8, "--seed", 7,
               "--n-test", 50, "--out", out) == 0
    return out


QUICK_TRAIN = {"n_restarts": 1, "max_iters": 200, "seed": 3}


# --- tables ---

def test_header_detection(tmp_path):
    a = tmp_path / "a.csv"
    a.write_text("x1,x2,y\n1,2,3\n4,5,6\n")
    values, header = io.read_table(a)
    assert header == ["x1", "x2", "y"] and values.shape == (2, 3)
    b = tmp_path / "b.csv"
    b.write_text("1,2,3\n4,5,6\n")
    values, header = io.read_table(b)
    assert header is None and values[1, 2] == 6.0


def test_bad_cells_name_row_and_column(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("x,y\n1,2\n3,nan\n")
    with pytest.raises(ValidationError, match="row 1, column 1"):
        io.read_table(f)
    f.write_text("1,2\n3,abc\n")
    with pytest.raises(ValidationError, match="row 1, column 1"):
        io.read_table(f)
    f.write_text("1,2\n3\n")
    with pytest.raises(ValidationError, match="row 1"):
        io.read_table(f)
    f.write_text("x,y\n")
    with pytest.raises(ValidationError, match="no data"):
        io.read_table(f)


@given(hnp.arrays(np.float64, (4, 3), elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_csv_roundtrip_is_exact(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("rt") / "t.csv"
    io.write_table(path, values, ["a", "b", "c"])
    back, header = io.read_table(path)
    assert header == ["a", "b", "c"]
    assert np.array_equal(back, values)


# --- model files ---

def _model(task="regression"):
    arch = NetworkArchitecture((3, 2, 1), task)
    rng = np.random.default_rng(0)
    params = NetworkParameters.unflatten(rng.normal(size=arch.n_parameters) / 3, arch)
    return io.ModelFile(arch, params, PenaltyConfig(0.001, 0.1, 0.5),
                        {"seed": 1, "n_iters": 5, "converged": True, "final_objective": 0.1})


def test_model_roundtrip_is_byte_identical(tmp_path):
    m = _model()
    m.input_shift, m.input_scale = np.array([0.1, 0.2, 1 / 3]), np.array([1.0, 2.0, 3.0])
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    m.save(a)
    loaded = io.ModelFile.load(a)
    loaded.save(b)
    assert a.read_bytes() == b.read_bytes()
    assert loaded.params.equals(m.params)
    assert np.array_equal(loaded.input_scale, m.input_scale)


def test_model_version_mismatch_rejected(tmp_path):
    d = _model().to_dict()
    d["format_version"] = 2
    path = tmp_path / "m.json"
    path.write_text(json.dumps(d))
    with pytest.raises(ValidationError, match="version"):
        io.ModelFile.load(path)
    d["format_version"], d["format"] = 1, "other"
    path.write_text(json.dumps(d))
    with pytest.raises(ValidationError, match="format"):
        io.ModelFile.load(path)


def test_model_rejects_inconsistent_selection(tmp_path):
    d = _model().to_dict()
    d["selected_features"] = [0]
    d["parameters"]["weights"][0] = [[0.0, 1.0, 0.0], [0.0, 0.0, 0.0]]
    with pytest.raises(ValidationError, match="selected_features"):
        io.ModelFile.from_dict(d)


# --- simulate ---

def test_simulate_shapes_and_metadata(tmp_path):
    out = tmp_path / "s"
    assert run("simulate", "--scenario", "complex", "--n", 100, "--p", 50, "--seed", 7,
               "--out", out) == 0
    values, header = io.read_table(out / "train.csv")
    assert values.shape == (100, 51) and header[-1] == "y"
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["kind"] == "complex" and meta["seed"] == 7
    assert meta["relevant"] == [0, 1, 2, 3, 4, 5] and meta["sigma"] > 0
    assert (out / "config.json").exists()


def test_simulate_is_deterministic(tmp_path):
    for name in ("a", "b"):
        run("simulate", "--n", 30, "--p", 7, "--seed", 2, "--n-test", 10, "--out", tmp_path / name)
    for f in ("train.csv", "test.csv", "metadata.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_simulated_responses_regenerate_from_metadata(sim_dir):
    # [DERIVED] y = f*(X) + sigma * eps, eps drawn after X from the first child stream
    meta = json.loads((sim_dir / "metadata.json").read_text())
    values, _ = io.read_table(sim_dir / "train.csv")
    X, y = values[:, :-1], values[:, -1]
    rng = np.random.default_rng(np.random.SeedSequence(meta["seed"]).spawn(2)[0])
    assert np.array_equal(rng.uniform(size=X.shape), X)
    eps = rng.standard_normal(len(y))
    assert np.array_equal(truth_function(meta["kind"])(X) + meta["sigma"] * eps, y)


# --- train / predict ---

def test_train_predict_pipeline(tmp_path, sim_dir):
    cfg = write_config(tmp_path / "run.json", data=str(sim_dir / "train.csv"), out_dir="out",
                       hidden=[4], penalty={"lambda": 0.01, "alpha": 0.5}, train=QUICK_TRAIN)
    assert run("train", "--config", cfg) == 0
    out = tmp_path / "out"
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["n_iters"] == len(metrics["objective_trace"]) - 1
    assert metrics["final_objective"] == metrics["objective_trace"][-1]
    model = io.ModelFile.load(out / "model.json")
    assert metrics["n_selected_features"] == len(model.selected_features)

    values, _ = io.read_table(sim_dir / "train.csv")
    io.write_table(tmp_path / "X.csv", values[:, :-1])
    assert run("predict", "--model", out / "model.json", "--data", tmp_path / "X.csv",
               "--out", tmp_path / "pred.csv") == 0
    pred, header = io.read_table(tmp_path / "pred.csv")
    assert header == ["prediction"] and pred.shape == (120, 1)
    # [DERIVED] in-process forward() on each row, bit for bit
    want = [forward(model.params, model.architecture, x) for x in values[:, :-1]]
    assert np.array_equal(pred[:, 0], want)


def test_train_is_byte_reproducible(tmp_path, sim_dir):
    cfg = dict(data=str(sim_dir / "train.csv"), hidden=[3],
               penalty={"lambda": 0.01, "alpha": 0.5}, train=QUICK_TRAIN)
    for name in ("a", "b"):
        write_config(tmp_path / f"{name}.json", out_dir=name, **cfg)
        assert run("train", "--config", tmp_path / f"{name}.json") == 0
    for f in ("model.json", "metrics.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    # the resolved config is enough to rerun
    assert run("train", "--config", tmp_path / "a" / "config.json", "--out", tmp_path / "c") == 0
    assert (tmp_path / "a" / "model.json").read_bytes() == (tmp_path / "c" / "model.json").read_bytes()


def test_full_shrinkage_reports_no_features(tmp_path, sim_dir):
    cfg = write_config(tmp_path / "run.json", data=str(sim_dir / "train.csv"), out_dir="out",
                       hidden=[3], penalty={"lambda": 1e6}, train=QUICK_TRAIN)
    assert run("train", "--config", cfg) == 0
    assert json.loads((tmp_path / "out" / "metrics.json").read_text())["n_selected_features"] == 0


@pytest.mark.parametrize("task, value", [("regression", 0.0), ("classification", 0.5)])
def test_zero_model_predictions(tmp_path, task, value):
    arch = NetworkArchitecture((3, 2, 1), task)
    io.ModelFile(arch, NetworkParameters.zeros(arch), PenaltyConfig()).save(tmp_path / "m.json")
    io.write_table(tmp_path / "X.csv", np.random.default_rng(0).normal(size=(6, 3)))
    assert run("predict", "--model", tmp_path / "m.json", "--data", tmp_path / "X.csv",
               "--out", tmp_path / "p.csv") == 0
    pred, _ = io.read_table(tmp_path / "p.csv")
    assert np.all(pred == value)


def test_classification_predictions_are_probabilities(tmp_path):
    _model("classification").save(tmp_path / "m.json")
    io.write_table(tmp_path / "X.csv", 5 * np.random.default_rng(1).normal(size=(20, 3)))
    run("predict", "--model", tmp_path / "m.json", "--data", tmp_path / "X.csv", "--out", tmp_path / "p.csv")
    pred, _ = io.read_table(tmp_path / "p.csv")
    assert np.all((pred > 0) & (pred < 1))


def test_predict_column_mismatch(tmp_path, capsys):
    _model().save(tmp_path / "m.json")
    io.write_table(tmp_path / "X.csv", np.zeros((2, 4)))
    code = run("predict", "--model", tmp_path / "m.json", "--data", tmp_path / "X.csv",
               "--out", tmp_path / "p.csv")
    assert code == cli.EXIT_VALIDATION
    assert "p=3" in capsys.readouterr().err


# --- error exits ---

def test_missing_data_file_is_io_error(tmp_path, capsys):
    cfg = write_config(tmp_path / "run.json", data="nope.csv", out_dir="out")
    assert run("train", "--config", cfg) == cli.EXIT_IO
    assert "nope.csv" in capsys.readouterr().err
    assert run("train", "--config", tmp_path / "missing.json") == cli.EXIT_IO


def test_nan_in_data_is_validation_error(tmp_path, capsys):
    (tmp_path / "d.csv").write_text("1,2,3\n4,,6\n")
    cfg = write_config(tmp_path / "run.json", data="d.csv", out_dir="out")
    assert run("train", "--config", cfg) == cli.EXIT_VALIDATION
    assert "row 1, column 1" in capsys.readouterr().err


def test_bad_configs_are_validation_errors(tmp_path):
    (tmp_path / "bad.json").write_text("{not json")
    assert run("train", "--config", tmp_path / "bad.json") == cli.EXIT_VALIDATION
    cfg = write_config(tmp_path / "run.json", data="d.csv", out_dir="o", epochs=3)
    assert run("train", "--config", cfg) == cli.EXIT_VALIDATION
    cfg = write_config(tmp_path / "run.json", data="d.csv", out_dir="o", penalty={"alpha": 2})
    assert run("train", "--config", cfg) == cli.EXIT_VALIDATION
    cfg = write_config(tmp_path / "cv.json", data="d.csv", out_dir="o")
    assert run("cv", "--config", cfg) == cli.EXIT_VALIDATION


def test_divergent_fit_is_numeric_error(tmp_path):
    (tmp_path / "d.csv").write_text("0.5,1e300\n0.2,-1e300\n")
    cfg = write_config(tmp_path / "run.json", data="d.csv", out_dir="out", hidden=[2],
                       train={"n_restarts": 2})
    assert run("train", "--config", cfg) == cli.EXIT_NUMERIC


# --- cv ---

def test_cv_singleton_grid(tmp_path, sim_dir):
    cfg = write_config(tmp_path / "cv.json", data=str(sim_dir / "train.csv"), out_dir="cv",
                       grid={"lambdas": [0.02], "alphas": [0.25], "architectures": [[3]]},
                       train=QUICK_TRAIN)
    assert run("cv", "--config", cfg) == 0
    lines = (tmp_path / "cv" / "cv_report.csv").read_text().splitlines()
    assert len(lines) == 2 and lines[0].startswith("lambda,alpha,hidden,mean_loss,se")
    model = io.ModelFile.load(tmp_path / "cv" / "model.json")
    assert model.penalty == PenaltyConfig(0.001, 0.02, 0.25)


def test_cv_reports_are_byte_reproducible(tmp_path, sim_dir):
    grid = {"lambdas": [0.05, 0.005], "alphas": [0.5], "architectures": [[3]]}
    for name in ("a", "b"):
        cfg = write_config(tmp_path / f"{name}.json", data=str(sim_dir / "train.csv"),
                           out_dir=name, grid=grid, train=QUICK_TRAIN)
        assert run("cv", "--config", cfg) == 0
    for f in ("cv_report.csv", "model.json", "metrics.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_cv_null_signal_picks_a_large_penalty(tmp_path):
    # [DERIVED] Monte Carlo over 10 seeds with y independent of X
    lambdas = [0.3, 0.1, 0.01, 0.001]
    hits = 0
    for seed in range(10):
        rng = np.random.default_rng(50 + seed)
        io.write_table(tmp_path / "d.csv", np.column_stack([rng.uniform(size=(45, 5)),
                                                            rng.normal(size=45)]))
        cfg = write_config(tmp_path / "cv.json", data="d.csv", out_dir=f"o{seed}",
                           grid={"lambdas": lambdas, "alphas": [0.5], "architectures": [[3]]},
                           train={"n_restarts": 1, "max_iters": 300, "seed": seed})
        assert run("cv", "--config", cfg) == 0
        best = json.loads((tmp_path / f"o{seed}" / "metrics.json").read_text())["best"]["lambda"]
        hits += best in lambdas[:2]
    assert hits > 5


# --- rates / sweep ---

def test_rates_injection_mode(tmp_path):
    assert run("rates", "--axis", "n", "--grid", "100,200,400,800,1600", "--inject-exponent", "1.0",
               "--out", tmp_path / "r") == 0
    summary = json.loads((tmp_path / "r" / "summary.json").read_text())
    assert abs(summary["excess_slope"] - 1.0) < 1e-10
    assert len((tmp_path / "r" / "rates.csv").read_text().splitlines()) == 1 + 5
    assert run("rates", "--axis", "p", "--grid", "1,2,3", "--inject-exponent", "1",
               "--out", tmp_path / "q") == cli.EXIT_VALIDATION


def test_rates_small_run(tmp_path):
    assert run("rates", "--axis", "m1", "--grid", "2,3,4", "--replicates", 1, "--n", 40,
               "--p", 8, "--n-test", 50, "--max-iters", 30, "--out", tmp_path / "r") == 0
    rows = (tmp_path / "r" / "rates.csv").read_text().splitlines()
    assert len(rows) == 4 and rows[0].startswith("grid_value,lambda")
    cfg = json.loads((tmp_path / "r" / "config.json").read_text())
    assert cfg["train"]["max_iters"] == 30 and cfg["lambda_scale"] == 0.05


def test_sweep_command(tmp_path):
    assert run("sweep", "--n", 40, "--p", 8, "--n-test", 50, "--lasso", "0,1e6", "--group", "0",
               "--hidden", 2, "--out", tmp_path / "w") == 0
    rows = (tmp_path / "w" / "sweep.csv").read_text().splitlines()
    assert len(rows) == 3 and rows[2].endswith("True")
