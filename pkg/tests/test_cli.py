import json

import pandas as pd
import pytest

import run_cluster
import run_compare
import run_robustness
import run_trace
from experiment_utils import (
    METHODS,
    MethodOptions,
    expand_methods,
    get_settings_from_env,
    load_trace,
    strip_wall_times,
)
from pkm_errors import EXIT_INPUT_ERROR, EXIT_NOT_CONVERGED, EXIT_OK, InputError


@pytest.fixture(autouse=True)
def output_dir(tmp_path, monkeypatch):
    out = tmp_path / "results"
    monkeypatch.setenv("PKM_OUTPUT_DIR", str(out))
    return out


def exit_code(main, argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    return info.value.code


def read_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def test_settings_from_env(monkeypatch):
    monkeypatch.setenv("PKM_LK_CAP", "123")
    monkeypatch.setenv("PKM_DATA_DIR", "/somewhere")
    settings = get_settings_from_env()
    assert settings["lk_cap"] == 123
    assert settings["data_dir"] == "/somewhere"


def test_expand_methods():
    variants = expand_methods(["pkm-agp", "fcm", "kmeanspp"], MethodOptions(), steps=[0.01, 0.1], fuzzifiers=[1.3])
    assert [v.label for v in variants] == ["pkm-agp(t=0.01)", "pkm-agp(t=0.1)", "fcm(m=1.3)", "kmeanspp"]
    assert variants[1].options.step == 0.1
    with pytest.raises(InputError):
        expand_methods(["spectral"], MethodOptions())


def test_cluster_writes_a_report(tmp_path, blobs_csv):
    output = tmp_path / "report.json"
    argv = ["--data", blobs_csv, "--label-col", "-1", "--k", "3", "--method", "pkm-fmsagp", "--seeds", "2", "--output", str(output)]
    assert exit_code(run_cluster.main, argv) == EXIT_OK

    report = read_json(output)
    assert report["method"] == "pkm-fmsagp"
    assert report["dataset"]["n_points"] == 30
    assert report["config"]["method"] == "fmsagp"
    assert len(report["runs"]) == 2
    best = report["best"]
    assert len(best["labels"]) == 30
    assert len(best["centers"]) == 3
    assert set(best["metrics"]) >= {"sse", "dbi", "nmi", "ari", "vm"}
    assert best["trace"] and best["converged"]
    assert best["objective"] == min(run["objective"] for run in report["runs"])


def test_cluster_accepts_underscore_flags(tmp_path, blobs_csv):
    output = tmp_path / "report.json"
    argv = ["--data", blobs_csv, "--label_col", "2", "--method", "kmeanspp", "--output", str(output)]
    assert exit_code(run_cluster.main, argv) == EXIT_OK
    assert read_json(output)["k"] == 3


def test_cluster_reports_are_deterministic(tmp_path, blobs_csv):
    reports = []
    for name in ("a.json", "b.json"):
        output = tmp_path / name
        argv = ["--data", blobs_csv, "--label-col", "-1", "--method", "pkm-msagp", "--seed", "9", "--output", str(output)]
        assert exit_code(run_cluster.main, argv) == EXIT_OK
        reports.append(strip_wall_times(read_json(output)))
    assert reports[0]["best"] == reports[1]["best"]
    assert reports[0]["config"] == reports[1]["config"]


def test_cluster_dispatches_fcm(tmp_path, blobs_csv):
    output = tmp_path / "fcm.json"
    argv = ["--data", blobs_csv, "--label-col", "-1", "--method", "fcm", "--m", "1.3", "--output", str(output)]
    assert exit_code(run_cluster.main, argv) == EXIT_OK
    report = read_json(output)
    assert report["best"]["method"] == "fcm"
    assert report["config"]["m"] == 1.3


def test_cluster_iteration_cap_exits_not_converged(tmp_path, blobs_csv):
    output = tmp_path / "capped.json"
    argv = ["--data", blobs_csv, "--label-col", "-1", "--method", "pkm-agp", "--step", "0.0001", "--max-iterations", "2", "--output", str(output)]
    assert exit_code(run_cluster.main, argv) == EXIT_NOT_CONVERGED
    best = read_json(output)["best"]
    assert not best["converged"]
    assert best["stop_reason"] == "max_iterations"


def test_cluster_bad_input_writes_an_error_record(tmp_path):
    data = tmp_path / "bad.csv"
    data.write_text("1,2\n3,x\n")
    output = tmp_path / "error.json"
    assert exit_code(run_cluster.main, ["--data", str(data), "--k", "2", "--output", str(output)]) == EXIT_INPUT_ERROR
    record = read_json(output)
    assert record["error"] == "ParseError"
    assert (record["row"], record["col"]) == (2, 1)


def test_cluster_missing_file(tmp_path):
    argv = ["--data", str(tmp_path / "absent.csv"), "--k", "2", "--output", str(tmp_path / "e.json")]
    assert exit_code(run_cluster.main, argv) == EXIT_INPUT_ERROR


def test_cluster_needs_k_without_labels(tmp_path):
    data = tmp_path / "plain.csv"
    data.write_text("1,2\n3,4\n5,6\n")
    assert exit_code(run_cluster.main, ["--data", str(data), "--output", str(tmp_path / "e.json")]) == EXIT_INPUT_ERROR


def test_cluster_uses_the_output_dir_by_default(output_dir, blobs_csv):
    assert exit_code(run_cluster.main, ["--data", blobs_csv, "--label-col", "-1", "--method", "kmeanspp"]) == EXIT_OK
    assert (output_dir / "cluster_kmeanspp.json").exists()


def test_compare_table(tmp_path, blobs_csv):
    output = tmp_path / "compare.csv"
    argv = ["--data", blobs_csv, "--label-col", "-1", "--methods", "pkm-msagp", "pkm-fmsagp", "kmeanspp", "--seeds", "2", "--output", str(output)]
    assert exit_code(run_compare.main, argv) == EXIT_OK

    table = pd.read_csv(output)
    assert table["method"].tolist() == ["pkm-msagp", "pkm-fmsagp", "kmeanspp"]
    for column in ("sse", "dbi", "nmi", "ari", "vm", "iterations", "wall_time", "mean_sse"):
        assert column in table.columns
    assert table["failures"].tolist() == [0, 0, 0]
    assert pd.notna(table.set_index("method").loc["pkm-fmsagp", "speedup_vs_msagp"])


def test_compare_records_failed_cells_and_continues(tmp_path, blobs_csv):
    output = tmp_path / "compare.csv"
    argv = ["--data", blobs_csv, "--label-col", "-1", "--methods", "pkm-fmsagp", "kmeanspp", "--seeds", "2", "--lk-cap", "10", "--output", str(output)]
    assert exit_code(run_compare.main, argv) == EXIT_OK

    table = pd.read_csv(output).set_index("method")
    assert table.loc["pkm-fmsagp", "failures"] == 2
    assert table.loc["kmeanspp", "failures"] == 0
    errors = read_json(tmp_path / "compare_errors.json")
    assert {failure["error"] for failure in errors["failures"]} == {"DimensionCap"}


def test_compare_iteration_cap_exits_not_converged(tmp_path, blobs_csv):
    output = tmp_path / "compare.csv"
    argv = ["--data", blobs_csv, "--label-col", "-1", "--methods", "pkm-agp", "kmeanspp", "--step", "0.0001", "--max-iterations", "2", "--seeds", "2", "--output", str(output)]
    assert exit_code(run_compare.main, argv) == EXIT_NOT_CONVERGED
    table = pd.read_csv(output)
    assert table["method"].tolist() == ["pkm-agp", "kmeanspp"]


def test_robustness_counts(tmp_path):
    output = tmp_path / "robustness.csv"
    argv = ["--data", "artificial", "--methods", "kmeanspp", "fcm", "--fuzzifiers", "1.3", "2.0", "--runs", "3", "--output", str(output)]
    assert exit_code(run_robustness.main, argv) == EXIT_OK

    table = pd.read_csv(output)
    assert table["method"].tolist() == ["kmeanspp", "fcm(m=1.3)", "fcm(m=2)"]
    assert table["runs"].tolist() == [3, 3, 3]
    assert ((table["correct"] >= 0) & (table["correct"] <= 3)).all()
    assert (table["percentage"] == 100.0 * table["correct"] / 3).all()


def test_robustness_with_zero_runs(tmp_path):
    output = tmp_path / "robustness.csv"
    argv = ["--data", "artificial", "--runs", "0", "--output", str(output)]
    assert exit_code(run_robustness.main, argv) == EXIT_OK
    table = pd.read_csv(output)
    assert table.empty
    assert list(table.columns) == ["method", "runs", "correct", "percentage"]


def test_robustness_needs_labels(tmp_path):
    data = tmp_path / "plain.csv"
    data.write_text("1,2\n3,4\n5,6\n")
    argv = ["--data", str(data), "--k", "2", "--runs", "2", "--output", str(tmp_path / "r.csv")]
    assert exit_code(run_robustness.main, argv) == EXIT_INPUT_ERROR


def test_trace_file(tmp_path, blobs_csv):
    output = tmp_path / "trace.csv"
    argv = ["--data", blobs_csv, "--label-col", "-1", "--methods", "pkm-agp", "pkm-fmsagp", "--steps", "0.01", "0.1", "--max-iterations", "3000", "--output", str(output)]
    assert exit_code(run_trace.main, argv) == EXIT_OK

    trace = load_trace(str(output))
    assert list(trace["method"].unique()) == ["pkm-agp(t=0.01)", "pkm-agp(t=0.1)", "pkm-fmsagp"]
    for _, rows in trace.groupby("method"):
        assert rows["iteration"].tolist() == list(range(1, len(rows) + 1))
    fmsagp = trace[trace["method"] == "pkm-fmsagp"]["objective"].tolist()
    assert all(b <= a + 1e-12 for a, b in zip(fmsagp, fmsagp[1:]))


def test_trace_iteration_cap_exits_not_converged(tmp_path, blobs_csv):
    output = tmp_path / "trace.csv"
    argv = ["--data", blobs_csv, "--label-col", "-1", "--methods", "pkm-agp", "--step", "0.0001", "--max-iterations", "2", "--output", str(output)]
    assert exit_code(run_trace.main, argv) == EXIT_NOT_CONVERGED
    trace = load_trace(str(output))
    assert trace["iteration"].tolist() == [1, 2]


def test_load_trace_checks_columns(tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(InputError):
        load_trace(str(path))


def test_every_method_is_runnable(tmp_path, blobs_csv):
    for method in METHODS:
        output = tmp_path / f"{method}.json"
        argv = ["--data", blobs_csv, "--label-col", "-1", "--method", method, "--step", "0.1", "--output", str(output)]
        assert exit_code(run_cluster.main, argv) in (EXIT_OK, EXIT_NOT_CONVERGED)
        assert read_json(output)["method"] == method
