import json

import numpy as np
import pytest

from septree import ContractError, Leaf, tree_from_dict
from septree.cli import RunConfig, evaluate, exit_code, main, run
from septree.dataio import IngestError, equal_frequency_thresholds, ingest, train_test_split

XOR_CSV = "x1,x2,label\n0,0,0\n0,1,1\n1,0,1\n1,1,0\n"


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def random_csv(tmp_path, rows=60, seed=0, extra=(), name="data.csv"):
    """Four binary features and a label, plus the requested auxiliary columns."""
    rng = np.random.default_rng(seed)
    X = (rng.random((rows, 4)) < 0.5).astype(int)
    y = ((X[:, 0] ^ X[:, 1]) | (rng.random(rows) < 0.1)).astype(int)
    a = (rng.random(rows) < 0.5).astype(int)
    a[0], a[1] = 0, 1
    cols = {
        "a": a,
        "y": rng.normal(size=rows),
        "mu": rng.uniform(0.3, 1, rows),
        "v_0": rng.normal(size=rows),
        "v_1": rng.normal(size=rows),
    }
    names = ["f0", "f1", "f2", "f3", *extra, "label"]
    lines = [",".join(names)]
    for i in range(rows):
        lines.append(",".join(map(str, [*X[i], *(cols[c][i] for c in extra), y[i]])))
    return write(tmp_path, "\n".join(lines) + "\n", name)


def stable(report):
    report = dict(report)
    report.pop("wall_time")
    report["solver"] = {k: v for k, v in report["solver"].items() if k != "elapsed"}
    return report


# -- ingestion ----------------------------------------------------------------------------


def test_ingest_xor(tmp_path):
    ds = ingest(write(tmp_path, XOR_CSV))
    assert ds.features.tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]
    assert ds.labels.tolist() == [0, 1, 1, 0]
    assert ds.feature_names == ("x1", "x2")


def test_ingest_reports_row_and_column(tmp_path):
    with pytest.raises(IngestError, match=r"row 2, column 'x2'"):
        ingest(write(tmp_path, "x1,x2,label\n0,0,0\n0,7,1\n"))


def test_ingest_missing_column(tmp_path):
    with pytest.raises(IngestError, match="missing"):
        ingest(write(tmp_path, XOR_CSV), aux=["mu"])


def test_ingest_ragged_row(tmp_path):
    with pytest.raises(IngestError, match="row 1"):
        ingest(write(tmp_path, "x1,label\n0\n"))


def test_ten_bins_give_nine_features(tmp_path):
    values = np.arange(100)
    text = "x,label\n" + "".join(f"{v},{v % 2}\n" for v in values)
    ds = ingest(write(tmp_path, text), continuous={"x": 10})
    assert ds.n_features == 9
    # equal-frequency bins: every threshold feature splits off a multiple of ten rows
    assert sorted(ds.features.sum(axis=0).tolist()) == [10, 20, 30, 40, 50, 60, 70, 80, 90]
    assert len(equal_frequency_thresholds(values, 10)) == 9


def test_split_is_seeded(tmp_path):
    ds = ingest(random_csv(tmp_path))
    a_train, a_test = train_test_split(ds, 0.25, 3)
    b_train, b_test = train_test_split(ds, 0.25, 3)
    assert np.array_equal(a_train.labels, b_train.labels)
    assert a_test.n_instances == 15 and a_train.n_instances == 45


# -- runs -------------------------------------------------------------------------------------


def test_run_xor_is_perfect(tmp_path):
    report = run(RunConfig(data=write(tmp_path, XOR_CSV)))
    assert report["status"] == "optimal"
    chosen = report["front"][report["selected"]]
    assert chosen["metrics"]["train"]["accuracy"] == 1.0
    assert chosen["nodes"] == 3
    assert "x1" in report["rendering"]


def test_fairness_selected_tree_within_tolerance(tmp_path):
    delta = 0.05
    cfg = RunConfig(data=random_csv(tmp_path, extra=("a",)), task="fairness", params={"sensitive": "a", "delta": delta})
    report = run(cfg)
    assert report["status"] == "optimal"
    for entry in report["front"]:
        assert entry["metrics"]["train"]["discrimination"] <= delta + 1e-9


def test_f1_report_flags_best_entry(tmp_path):
    report = run(RunConfig(data=random_csv(tmp_path), task="f1"))
    flags = [e["selected"] for e in report["front"]]
    assert flags.count(True) == 1
    best = max(e["metrics"]["train"]["f1"] for e in report["front"])
    assert report["front"][report["selected"]]["metrics"]["train"]["f1"] == pytest.approx(best)


def test_cost_sensitive_report(tmp_path):
    cfg = RunConfig(data=random_csv(tmp_path), task="cost-sensitive", params={"feature_costs": [1, 2, 3, 4], "level": "middle"})
    report = run(cfg)
    m = report["front"][report["selected"]]["metrics"]["train"]
    assert m["cost_per_instance"] == pytest.approx(m["cost"] / 60)
    assert report["cost_spec"]["feature_costs"] == [1.0, 2.0, 3.0, 4.0]


def test_policy_report(tmp_path):
    report = run(RunConfig(data=random_csv(tmp_path, extra=("y", "mu", "v_0", "v_1")), task="policy", params={"method": "DR"}))
    entry = report["front"][report["selected"]]
    assert entry["metrics"]["train"]["policy_value"] == pytest.approx(entry["policy_value_estimate"], rel=1e-9)


def test_test_fraction_adds_held_out_metrics(tmp_path):
    report = run(RunConfig(data=random_csv(tmp_path), test_fraction=0.25, seed=4))
    assert report["test_instances"] == 15
    assert "test" in report["front"][0]["metrics"]


def test_runs_are_deterministic(tmp_path):
    cfg = RunConfig(data=random_csv(tmp_path), max_depth=3, test_fraction=0.2, seed=2)
    assert stable(run(cfg)) == stable(run(cfg))


def test_tuned_budget_reported(tmp_path):
    report = run(RunConfig(data=random_csv(tmp_path), max_nodes="tune"))
    assert report["tuned"] and 0 <= report["max_nodes"] <= 3


def test_config_rejects_unknown_keys():
    with pytest.raises(ContractError, match="unknown"):
        RunConfig.from_dict({"data": "x", "colour": "red"})


# -- evaluation -------------------------------------------------------------------------------


def test_evaluate_leaf_on_xor(tmp_path):
    cfg = RunConfig(data=write(tmp_path, XOR_CSV))
    assert evaluate(Leaf(0).to_dict(), cfg)["accuracy"] == 0.5


def test_report_tree_round_trip(tmp_path):
    cfg = RunConfig(data=write(tmp_path, XOR_CSV))
    report = run(cfg)
    stored = json.loads(json.dumps(report))
    tree = tree_from_dict(stored["front"][stored["selected"]]["tree"])
    assert evaluate(tree, cfg)["accuracy"] == 1.0


# -- command line -----------------------------------------------------------------------------


def test_exit_codes():
    assert exit_code("optimal") == 0
    assert exit_code("timeout-incumbent") == 2
    assert exit_code("infeasible") == 3
    assert exit_code("broken") == 1


def test_cli_solve_and_evaluate(tmp_path, capsys):
    data = write(tmp_path, XOR_CSV)
    out = str(tmp_path / "report.json")
    assert main(["solve", "--data", data, "--depth", "2", "-o", out]) == 0
    assert (tmp_path / "report.txt").exists()
    capsys.readouterr()
    assert main(["evaluate", "--data", data, "--tree", out]) == 0
    assert json.loads(capsys.readouterr().out)["accuracy"] == 1.0


def test_cli_infeasible(tmp_path, capsys):
    data = write(tmp_path, XOR_CSV)
    assert main(["solve", "--data", data, "--min-leaf-support", "5"]) == 3


def test_cli_timeout(tmp_path, capsys):
    rng = np.random.default_rng(0)
    X = (rng.random((400, 14)) < 0.5).astype(int)
    y = rng.integers(0, 2, 400)
    text = ",".join(f"f{j}" for j in range(14)) + ",label\n" + "".join(",".join(map(str, [*r, k])) + "\n" for r, k in zip(X, y))
    data = write(tmp_path, text)
    assert main(["solve", "--data", data, "--depth", "3", "--no-depth2", "--time-limit", "1e-9"]) == 2


def test_cli_errors_exit_one(tmp_path, capsys):
    assert main(["solve", "--data", str(tmp_path / "absent.csv")]) == 1
    assert main(["solve", "--data", write(tmp_path, "x1,label\n3,0\n")]) == 1
    assert "error" in capsys.readouterr().err


def test_cli_config_file_with_flag_override(tmp_path, capsys):
    data = write(tmp_path, XOR_CSV)
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"data": data, "max_depth": 1}))
    assert main(["solve", "--config", str(cfg), "--depth", "2"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["max_depth"] == 2


def test_cli_tune_and_oracle(tmp_path, capsys):
    data = random_csv(tmp_path)
    assert main(["tune", "--data", data]) == 0
    assert 0 <= json.loads(capsys.readouterr().out)["max_nodes"] <= 3
    xor = write(tmp_path, XOR_CSV, "xor.csv")
    assert main(["oracle", "--data", xor, "--depth", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["front"][0]["value"] == [0]
