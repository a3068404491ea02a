import csv
import json
import math

from sqkd import cli
from sqkd.analysis import TheoremReport
from sqkd.protocol import read_transcript, stats_from_records


def write_config(tmp_path, name="cfg.json", **overrides):
    cfg = {
        "rounds": 400,
        "ctrl_prob": 0.5,
        "test_fraction": 0.5,
        "seed": 13,
        "mode": "sampling",
        "attack": {"name": "identity"},
    }
    cfg.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def test_run_identity_exits_zero(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "stats.json"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    stats = json.loads(out.read_text())
    assert stats["ctrl_error_rate"] == 0.0
    assert stats["test_error_rate"] == 0.0
    assert stats["key_mismatch_rate"] == 0.0
    assert stats["aborted"] is False
    assert (tmp_path / "stats.jsonl").exists()


def test_run_detects_measure_resend(tmp_path):
    cfg = write_config(tmp_path, attack={"name": "measure_resend_z"})
    out = tmp_path / "stats.json"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 2
    stats = json.loads(out.read_text())
    assert stats["aborted"] is True
    assert abs(stats["ctrl_error_rate"] - 0.5) < 0.15


def test_run_malformed_json(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"rounds": ')
    assert cli.main(["run", "--config", str(path), "--out", str(tmp_path / "o.json")]) == 1
    assert "error:" in capsys.readouterr().err


def test_run_rejects_unknown_keys(tmp_path):
    cfg = write_config(tmp_path, typo_key=3)
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o.json")]) == 1


def test_run_rejects_unknown_attack(tmp_path):
    cfg = write_config(tmp_path, attack={"name": "nemo"})
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o.json")]) == 1


def test_run_passes_attack_params_and_rounds(tmp_path):
    cfg = write_config(
        tmp_path, rounds=2000, attack={"name": "phase_probe", "params": {"theta": 1.2}}
    )
    out = tmp_path / "p.json"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 2
    stats = json.loads(out.read_text())
    assert abs(stats["ctrl_error_rate"] - (1 - math.cos(1.2)) / 2) < 0.06

    cfg = write_config(
        tmp_path, name="cp.json", rounds=50, attack={"name": "cnot_parity", "rounds": [1, 3]}
    )
    out = tmp_path / "cp_stats.json"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) in (0, 2)
    header, records = read_transcript(tmp_path / "cp_stats.jsonl")
    assert header["attack"]["rounds"] == [1, 3]
    assert len(records) == 50


def test_run_transcript_round_trip(tmp_path):
    cfg = write_config(tmp_path, attack={"name": "swap"})
    out = tmp_path / "stats.json"
    cli.main(["run", "--config", str(cfg), "--out", str(out)])
    header, records = read_transcript(tmp_path / "stats.jsonl")
    recomputed = stats_from_records(records, header["abort_threshold"])
    assert recomputed.as_dict() == json.loads(out.read_text())
    assert header["attack"]["name"] == "swap"
    assert len(records) == header["rounds"]


def test_run_is_deterministic_byte_for_byte(tmp_path):
    cfg = write_config(tmp_path, attack={"name": "measure_resend_z"}, seed=99)
    blobs = []
    for tag in ("a", "b"):
        out = tmp_path / f"{tag}.json"
        cli.main(["run", "--config", str(cfg), "--out", str(out)])
        blobs.append(out.read_bytes() + (tmp_path / f"{tag}.jsonl").read_bytes())
    assert blobs[0] == blobs[1]


def test_seed_env_override(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, seed=1)
    out_env = tmp_path / "env.json"
    monkeypatch.setenv(cli.SEED_ENV, "2")
    cli.main(["run", "--config", str(cfg), "--out", str(out_env)])
    monkeypatch.delenv(cli.SEED_ENV)

    cfg2 = write_config(tmp_path, name="cfg2.json", seed=2)
    out_direct = tmp_path / "direct.json"
    cli.main(["run", "--config", str(cfg2), "--out", str(out_direct)])
    assert (tmp_path / "env.jsonl").read_text() == (tmp_path / "direct.jsonl").read_text()


def test_exact_mode_run(tmp_path):
    cfg = write_config(tmp_path, rounds=4, mode="exact", attack={"name": "cnot_parity"})
    out = tmp_path / "stats.json"
    code = cli.main(["run", "--config", str(cfg), "--out", str(out)])
    stats = json.loads(out.read_text())
    assert code in (0, 2)
    assert (code == 2) == stats["aborted"]
    # exact mode beyond the cap is a config error
    cfg_big = write_config(tmp_path, name="big.json", rounds=9, mode="exact")
    assert cli.main(["run", "--config", str(cfg_big), "--out", str(out)]) == 1


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------


def test_check_identity(capsys):
    assert cli.main(["check", "--attack", "identity", "--max-pattern-len", "3"]) == 0
    verdict = json.loads(capsys.readouterr().out)
    assert verdict["passed"] is True
    assert verdict["max_residual"] == 0.0
    assert verdict["max_leakage"] == 0.0
    assert all(r["test_residual"] == 0.0 for r in verdict["rounds"])


def test_check_cnot_parity_reports_exact_marginals(capsys):
    assert cli.main(["check", "--attack", "cnot_parity", "--max-pattern-len", "3"]) == 0
    verdict = json.loads(capsys.readouterr().out)
    # per-round marginal CTRL error on each attacked round is exactly 1/2
    assert abs(verdict["rounds"][0]["ctrl_error_prob"] - 0.5) < 1e-9
    assert abs(verdict["rounds"][1]["ctrl_error_prob"] - 0.5) < 1e-9
    assert verdict["rounds"][2]["ctrl_error_prob"] < 1e-9
    assert verdict["passed"] is True  # detectable, so the theorem is vacuous


def test_check_phase_probe_closed_forms(capsys):
    theta = 0.5
    code = cli.main(
        ["check", "--attack", "phase_probe", "--param", f"theta={theta}",
         "--max-pattern-len", "4"]
    )
    assert code == 0
    verdict = json.loads(capsys.readouterr().out)
    assert abs(verdict["max_residual"] - (1 - math.cos(theta)) / 2) < 1e-9
    assert abs(verdict["max_leakage"] - math.sin(theta)) < 1e-9


def test_check_unknown_attack(capsys):
    assert cli.main(["check", "--attack", "nope"]) == 1
    assert "error:" in capsys.readouterr().err


def test_check_exit_three_on_theorem_failure(monkeypatch, capsys):
    # No physical attack can fail the theorem; force a failing report to pin
    # the exit-code contract.
    def fake_theorem_check(attack, patterns=None, eps=1e-9, max_pattern_len=6, **kw):
        return TheoremReport(
            max_residual=0.0, max_leakage=1.0, eps=eps, passed=False, n_patterns=0
        )

    monkeypatch.setattr(cli, "theorem_check", fake_theorem_check)
    assert cli.main(["check", "--attack", "identity", "--max-pattern-len", "2"]) == 3
    verdict = json.loads(capsys.readouterr().out)
    assert verdict["passed"] is False


def test_check_bad_param_syntax(capsys):
    assert cli.main(["check", "--attack", "phase_probe", "--param", "theta"]) == 1


# ---------------------------------------------------------------------------
# scan
# ---------------------------------------------------------------------------


def test_scan_phase_probe_grid(tmp_path):
    out = tmp_path / "scan.csv"
    grid = f"0:{math.pi / 2}:{math.pi / 6}"
    assert cli.main(
        ["scan", "--attack", "phase_probe", "--param", "theta", "--grid", grid,
         "--out", str(out)]
    ) == 0
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["theta", "ctrl_error", "test_error", "trace_distance", "holevo"]
    assert len(rows) == 5  # header + 4 grid points
    thetas = [float(r[0]) for r in rows[1:]]
    ctrl = [float(r[1]) for r in rows[1:]]
    td = [float(r[3]) for r in rows[1:]]
    for th, c, t in zip(thetas, ctrl, td):
        assert abs(c - (1 - math.cos(th)) / 2) < 1e-9
        assert abs(t - math.sin(th)) < 1e-9
    for got, want in zip(ctrl, [0.0, 0.0670, 0.25, 0.5]):
        assert abs(got - want) < 1e-3
    for got, want in zip(td, [0.0, 0.5, 0.8660, 1.0]):
        assert abs(got - want) < 1e-3


def test_scan_single_point_grid(tmp_path):
    out = tmp_path / "one.csv"
    assert cli.main(
        ["scan", "--attack", "phase_probe", "--param", "theta", "--grid", "0:0:1",
         "--out", str(out)]
    ) == 0
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 2
    assert all(float(v) == 0.0 for v in rows[1])


def test_scan_descending_grid_preserved(tmp_path):
    out = tmp_path / "desc.csv"
    assert cli.main(
        ["scan", "--attack", "phase_probe", "--param", "theta", "--grid", "1:0:-0.5",
         "--out", str(out)]
    ) == 0
    with open(out) as fh:
        rows = list(csv.reader(fh))
    thetas = [float(r[0]) for r in rows[1:]]
    assert thetas == [1.0, 0.5, 0.0]


def test_scan_unknown_family(tmp_path, capsys):
    code = cli.main(
        ["scan", "--attack", "identity", "--param", "theta", "--grid", "0:1:0.5",
         "--out", str(tmp_path / "x.csv")]
    )
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_scan_empty_grid(tmp_path):
    code = cli.main(
        ["scan", "--attack", "phase_probe", "--param", "theta", "--grid", "0:1:0",
         "--out", str(tmp_path / "x.csv")]
    )
    assert code == 1


# ---------------------------------------------------------------------------
# attacks
# ---------------------------------------------------------------------------


def test_attacks_listing(capsys):
    assert cli.main(["attacks"]) == 0
    names = capsys.readouterr().out.split()
    assert names == ["identity", "cnot_parity", "measure_resend_z", "swap", "phase_probe"]
