import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from etdse.cli import main
from etdse.network import NetworkGraph


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_run_tiny_preset(tmp_path, capsys):
    assert main(["run", "--preset", "tiny", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "results.csv")
    assert rows[0] == ["step", "mean_amse", "mean_mse", "realized_rate_cumulative"]
    assert len(rows) == 6
    assert [r[0] for r in rows[1:]] == ["0", "1", "2", "3", "4"]
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["config"]["node_count"] == 3
    assert summary["results"]["trials"] == 1
    assert summary["calibration"]["tau"] == 0.5
    assert NetworkGraph.load(tmp_path / "graph.json").node_count == 3
    assert "realized_rate" in capsys.readouterr().out


def test_floats_round_trip(tmp_path):
    main(["run", "--preset", "tiny", "--out", str(tmp_path)])
    for row in read_csv(tmp_path / "results.csv")[1:]:
        for cell in row[1:]:
            assert repr(float(cell)) == repr(float(format(float(cell), ".17g")))
            assert "," not in cell


def test_malformed_config_names_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"horizon": 5, "strategy": {"treshold": 1.0}}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "strategy.treshold" in capsys.readouterr().err


def test_bad_override_and_missing_config(tmp_path, capsys):
    assert main(["run", "--preset", "tiny", "--set", "nodes=3", "--out", str(tmp_path)]) == 2
    assert "nodes" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path)]) == 2
    assert main(["run", "--preset", "tiny"]) == 2


def test_seed_flag_changes_output(tmp_path):
    main(["run", "--preset", "tiny", "--out", str(tmp_path / "a")])
    main(["run", "--preset", "tiny", "--seed", "7", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a/results.csv").read_bytes() != (tmp_path / "b/results.csv").read_bytes()
    assert json.loads((tmp_path / "b/summary.json").read_text())["config"]["rng_seed"] == 7


def test_config_file_layered_on_preset(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"horizon": 3, "strategy": {"tau": 2.0}}))
    assert main(["run", "--preset", "tiny", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    s = json.loads((tmp_path / "o/summary.json").read_text())
    assert s["config"]["horizon"] == 3 and s["config"]["node_count"] == 3
    assert s["config"]["strategy"]["tau"] == 2.0


def test_same_seed_byte_identical(tmp_path):
    args = ["run", "--preset", "desk", "--set", "trials=4", "--set", "horizon=20"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b"), "--jobs", "2"])
    for name in ("results.csv", "summary.json", "graph.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sweep_three_strategies(tmp_path):
    out = tmp_path / "s"
    rc = main(
        [
            "sweep", "--preset", "desk", "--out", str(out),
            "--set", "trials=10", "--set", "horizon=80",
            "--set", "sweep.rates=[0.3]", "--set", "sweep.calibration_trials=10",
        ]
    )  # fmt: skip
    assert rc == 0
    for name in ("event_triggered_r0.30", "random_r0.30", "periodic_r0.30"):
        assert len(read_csv(out / f"{name}.csv")) == 81
    rows = read_csv(out / "comparison.csv")
    header, body = rows[0], rows[1:]
    assert header[0] == "realized_rate" and len(body) == 3
    for r in body:
        assert abs(float(r[0]) - 0.3) <= 0.02
    et, rnd, per = body
    # Random and periodic reuse the calibrated flattening weight.
    assert et[4] == rnd[4] == per[4]
    doc = json.loads((out / "sweep.json").read_text())
    assert doc["cells"]["event_triggered_r0.30"]["calibration"]["iterations"] >= 1


def test_sweep_empty_strategy_list(tmp_path, capsys):
    assert main(["sweep", "--preset", "tiny", "--set", "sweep.strategies=[]", "--out", str(tmp_path)]) == 2
    assert "strategies" in capsys.readouterr().err


def test_sweep_full_rate_substitution(tmp_path, caplog):
    rc = main(
        ["sweep", "--preset", "tiny", "--set", "sweep.rates=[1.0]", "--set", "sweep.strategies=[\"event_triggered\"]", "--out", str(tmp_path)]
    )
    assert rc == 0
    assert (tmp_path / "full_rate_r1.00.csv").exists()
    assert not (tmp_path / "event_triggered_r1.00.csv").exists()
    assert any("full_rate" in r.getMessage() for r in caplog.records)


def test_calibrate_command(tmp_path):
    rc = main(
        ["calibrate", "--preset", "desk", "--set", "horizon=40", "--set", "sweep.rates=[0.5,1.0]", "--set", "sweep.calibration_trials=3", "--out", str(tmp_path)]
    )
    assert rc == 0
    doc = json.loads((tmp_path / "calibration.json").read_text())
    first, second = doc["targets"]
    assert abs(first["realized_rate"] - 0.5) <= 0.02 and first["tau"] > 0
    assert first["calibration"]["delta_star"] > 0
    assert second["tau"] == 0.0


def test_calibration_failure_exit_code(tmp_path, capsys):
    # One trial of two nodes over 2 steps: achievable rates are 0.5, 0.75 and 1.
    rc = main(
        [
            "calibrate", "--preset", "tiny", "--out", str(tmp_path),
            "--set", "node_count=2", "--set", "horizon=2", "--set", "sweep.calibration_trials=1",
            "--set", "sweep.rates=[0.6]", "--set", "sweep.tolerance=0.01",
        ]
    )  # fmt: skip
    assert rc == 4
    assert "calibration" in capsys.readouterr().err


def test_check_linear_preset_passes(capsys):
    assert main(["check", "--preset", "paper-linear"]) == 0
    out = capsys.readouterr().out
    for name in ("A1", "A2", "A3", "primitive", "alpha*", "beta*", "delta*"):
        assert name in out
    assert "FAIL" not in out


def test_check_single_xi_sensor_fails_observability(tmp_path, capsys):
    rc = main(["check", "--preset", "desk", "--set", "sensor_kind=linear_xi", "--set", "sensor_count=1", "--out", str(tmp_path)])
    assert rc == 1
    assert "A2_collective_observability: FAIL" in capsys.readouterr().out
    assert json.loads((tmp_path / "check.json").read_text())["checks"]["A2_collective_observability"] is False


def test_check_disconnected_graph_fails_connectivity(tmp_path, capsys):
    g = NetworkGraph(4, frozenset({(0, 1), (1, 0), (2, 3), (3, 2)}), frozenset({0, 2}), np.array([[0, 0], [1, 0], [9, 0], [10, 0.0]]))
    g.dump(tmp_path / "two_parts.json")
    rc = main(["check", "--preset", "tiny", "--set", f"graph={tmp_path / 'two_parts.json'}"])
    assert rc == 1
    out = capsys.readouterr().out
    assert "A3_strong_connectivity: FAIL" in out and "A2_collective_observability: PASS" in out


def test_numeric_failure_exit_code(tmp_path, capsys):
    # The sensor sits on the target's prior mean, so the range Jacobian is undefined.
    g = NetworkGraph(2, frozenset({(0, 1), (1, 0)}), frozenset({0, 1}), np.array([[2500.0, 2500.0], [0.0, 0.0]]))
    g.dump(tmp_path / "g.json")
    rc = main(
        [
            "run", "--preset", "tiny", "--out", str(tmp_path / "o"),
            "--set", "node_count=2", "--set", "sensor_kind=toa_doa", "--set", f"graph={tmp_path / 'g.json'}",
            "--set", "prior.mean_offset_std=[0,0,0,0]", "--set", "initial_state.position_fraction=1e-12",
        ]
    )  # fmt: skip
    assert rc == 3
    assert "numeric" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "etdse.cli", "run", "--preset", "tiny", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
        check=False,
    )
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "results.csv").exists()


def test_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["plot"])
    assert exc.value.code == 2
