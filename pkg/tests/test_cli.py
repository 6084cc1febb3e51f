import csv
import json
from fractions import Fraction

import pytest

from dtrsim import cli, gen_linear, gen_random_dag, read_log, write_log
from dtrsim.cli import SWEEP_COLUMNS, main, split_heuristics


@pytest.fixture
def linear_log(tmp_path):
    path = tmp_path / "lin.dtrlog"
    write_log(gen_linear(32), path)
    return str(path)


@pytest.fixture
def dag_log(tmp_path):
    path = tmp_path / "dag.dtrlog"
    write_log(gen_random_dag(60, seed=5), path)
    return str(path)


def _run(capsys, *argv):
    # argparse errors exit through SystemExit; everything else returns
    try:
        code = main(list(argv))
    except SystemExit as exc:
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


def test_split_heuristics_keeps_ablation_specs_whole():
    assert split_heuristics("lru,ablation:s=on,m=off,c=local,largest") == \
        ["lru", "ablation:s=on,m=off,c=local", "largest"]
    assert split_heuristics(" dtr-full , ,msps") == ["dtr-full", "msps"]


def test_replay_at_full_ratio_has_no_slowdown(capsys, linear_log):
    code, out, _ = _run(capsys, "replay", "--log", linear_log, "--ratio", "1")
    row = json.loads(out)
    assert code == 0
    assert row["slowdown"] == "1.000000" and row["remats"] == 0
    assert row["budget_ratio"] == "1.000000"
    assert set(row) == set(SWEEP_COLUMNS)


def test_replay_csv_header(capsys, linear_log):
    code, out, _ = _run(capsys, "replay", "--log", linear_log, "--ratio",
                        "0.5", "--format", "csv")
    lines = out.splitlines()
    assert code == 0
    assert lines[0] == ("heuristic,policy,budget_bytes,budget_ratio,"
                        "base_compute,total_compute,slowdown,remats,"
                        "evictions,peak_memory,storage_accesses,status")
    assert len(lines) == 2


def test_replay_oom_exits_2(capsys, linear_log):
    code, out, _ = _run(capsys, "replay", "--log", linear_log, "--budget",
                        "1")
    assert code == 2 and json.loads(out)["status"] == "oom"


@pytest.mark.parametrize("argv", [
    ["replay", "--log", "x", "--ratio", "0.5", "--budget", "3"],
    ["replay", "--ratio", "0.5"],
    ["nonsense"],
    ["gen", "linear", "--n", "1", "--out", "x"],
    ["verify-bounds", "--theorem", "3"],
])
def test_usage_errors_exit_1(capsys, argv):
    assert _run(capsys, *argv)[0] == 1


@pytest.mark.parametrize("extra", [
    ["--ratio", "0"], ["--ratio", "abc"], ["--budget", "-1"],
    ["--ratio", "0.5", "--heuristic", "best"],
    ["--ratio", "0.5", "--policy", "never"],
])
def test_bad_values_exit_1(capsys, linear_log, extra):
    code, _, err = _run(capsys, "replay", "--log", linear_log, *extra)
    assert code == 1 and "error" in err


def test_malformed_log_exits_1_with_location(capsys, tmp_path):
    bad = tmp_path / "bad.dtrlog"
    bad.write_text('{"instr":"RELEASE","tensor":"x"}\n')
    code, _, err = _run(capsys, "replay", "--log", str(bad), "--ratio", "1")
    assert code == 1 and "line 1, column 1" in err


def test_missing_log_exits_1(capsys, tmp_path):
    code, _, _ = _run(capsys, "replay", "--log", str(tmp_path / "none"),
                      "--ratio", "1")
    assert code == 1


def test_bad_seed_exits_1(capsys, linear_log, monkeypatch):
    monkeypatch.setenv("RMS_SEED", "seven")
    code, _, _ = _run(capsys, "replay", "--log", linear_log, "--ratio", "1")
    assert code == 1


def test_sweep_rows_are_sorted(capsys, dag_log):
    code, out, _ = _run(capsys, "sweep", "--log", dag_log, "--ratios",
                        "0.6,1,0.8", "--heuristics", "lru,dtr-full",
                        "--policies", "eager-evict,banish")
    rows = list(csv.DictReader(out.splitlines()))
    assert code == 0 and len(rows) == 12
    keys = [(r["heuristic"], r["policy"], -float(r["budget_ratio"]))
            for r in rows]
    assert keys == sorted(keys)
    assert rows[0]["heuristic"] == "dtr-full"
    assert rows[0]["budget_ratio"] == "1.000000"


def test_sweep_parallel_matches_serial(capsys, dag_log):
    args = ["sweep", "--log", dag_log, "--ratios", "0.9,0.5",
            "--heuristics", "msps,random,largest"]
    _, serial, _ = _run(capsys, *args)
    _, parallel, _ = _run(capsys, *args, "--parallel", "2")
    assert serial == parallel


def test_sweep_writes_file(capsys, dag_log, tmp_path):
    dest = tmp_path / "out.csv"
    code, out, _ = _run(capsys, "sweep", "--log", dag_log, "--ratios", "1",
                        "--heuristics", "lru", "--out", str(dest))
    assert code == 0 and out == ""
    assert dest.read_text().startswith("heuristic,policy,")


def test_trace_file(capsys, linear_log, tmp_path):
    dest = tmp_path / "trace.csv"
    code, _, _ = _run(capsys, "replay", "--log", linear_log, "--ratio",
                      "0.5", "--trace", str(dest))
    rows = list(csv.reader(dest.read_text().splitlines()))
    assert code == 0
    assert rows[0] == ["step", "storage_id", "state"]
    assert {r[2] for r in rows[1:]} <= {"resident", "evicted", "pinned"}
    assert "evicted" in {r[2] for r in rows[1:]}
    steps = [int(r[0]) for r in rows[1:]]
    assert steps == sorted(steps)


def test_verify_bounds_linear(capsys):
    code, out, _ = _run(capsys, "verify-bounds", "--theorem", "1", "--sizes",
                        "16,32")
    report = json.loads(out)
    assert code == 0 and report["passed"]
    assert [r["N"] for r in report["results"]] == [16, 32]


def test_verify_bounds_adversary(capsys):
    code, out, _ = _run(capsys, "verify-bounds", "--theorem", "2", "--sizes",
                        "64:4")
    report = json.loads(out)
    assert code == 0 and len(report["results"]) == 3
    assert all(r["ratio"] >= 4 for r in report["results"])


def test_verify_bounds_failure_exits_3(capsys, monkeypatch):
    real = cli.linear_bound_check

    def broken(n):
        r = real(n)
        r["backward_gap"] = 10 ** 6
        return r

    monkeypatch.setattr(cli, "linear_bound_check", broken)
    code, out, _ = _run(capsys, "verify-bounds", "--theorem", "1", "--sizes",
                        "16")
    report = json.loads(out)
    assert code == 3 and not report["passed"]
    assert report["failures"][0]["checks"]["backward_gap"] is False


def test_verify_bounds_bad_sizes(capsys):
    code, _, _ = _run(capsys, "verify-bounds", "--theorem", "2", "--sizes",
                      "64")
    assert code == 1


def test_gen_linear_and_random(capsys, tmp_path, monkeypatch):
    lin = tmp_path / "lin.dtrlog.gz"
    assert _run(capsys, "gen", "linear", "--n", "8", "--out", str(lin))[0] == 0
    assert read_log(lin) == gen_linear(8)

    monkeypatch.setenv("RMS_SEED", "9")
    rnd = tmp_path / "rnd.dtrlog"
    assert _run(capsys, "gen", "random", "--nodes", "30", "--out",
                str(rnd))[0] == 0
    assert read_log(rnd) == gen_random_dag(30, seed=9)
    assert _run(capsys, "gen", "random", "--nodes", "30", "--seed", "9",
                "--out", str(rnd))[0] == 0
    assert read_log(rnd) == gen_random_dag(30, seed=9)


def test_gen_adversary_prints_report(capsys, tmp_path):
    dest = tmp_path / "adv.dtrlog"
    code, out, _ = _run(capsys, "gen", "adversary", "--n", "64", "--budget",
                        "4", "--heuristic", "lru", "--out", str(dest))
    report = json.loads(out)
    assert code == 0 and report["static_cost"] == 64
    assert Fraction(report["dtr_cost"], 64) >= Fraction(64, 16)
    assert read_log(dest).base_compute == 64
    assert _run(capsys, "gen", "adversary", "--n", "8", "--budget", "9")[0] \
        == 1
