"""
Command line tests: run_command output directories, verdicts and exit codes.
"""

import os

import pytest

from shared.errors import SimulationDivergence
from pendulum.experiment import build_parser, build_verdicts, main, run_command, scenario_variants
from pendulum.scenario_config import parse_config
from pendulum.sim import RobustnessSummary, ScenarioConfig

SHORT = "[sim]\nt_end = 1\n"
SHORT_COMPARE = "[sim]\nt_end = 1\ncompare = true\nschedule.1 = step m1 1.3 at 0.5\n"


def _write(tmp_path, text, name="scenario.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


# ── run_command ──────────────────────────────────────────────────────────────

def test_single_run_outputs(tmp_path):
    out = tmp_path / "out"
    report = run_command(parse_config(SHORT), str(out))
    names = sorted(os.listdir(out))
    assert names == sorted([
        "trajectory.csv", "metrics.txt",
        "tracking.svg", "tracking_error.svg", "control_effort.svg", "theta_norms.svg",
    ])
    assert list(report.metrics) == ["classical"]
    assert report.verdicts == []
    assert all(os.path.exists(p) for p in report.paths)
    assert "# metrics: classical" in (out / "metrics.txt").read_text(encoding="utf-8")


def test_compare_run_outputs(tmp_path):
    out = tmp_path / "out"
    report = run_command(parse_config(SHORT_COMPARE), str(out))
    names = set(os.listdir(out))
    assert {"trajectory_classical.csv", "trajectory_adaptive.csv", "theta_f.csv", "theta_g.csv",
            "metrics.txt"} <= names
    assert "trajectory.csv" not in names
    assert set(report.metrics) == {"classical", "adaptive"}
    assert set(report.robustness) == {"classical", "adaptive"}
    assert report.robustness["adaptive"].change_time == 0.5
    assert any(v.startswith("adaptive final-window RMS < classical: ") for v in report.verdicts)
    assert len(report.digests) == 2

    text = (out / "metrics.txt").read_text(encoding="utf-8")
    assert "# verdicts" in text
    assert "  compare = true" in text


def test_divergence_writes_partial_results(tmp_path):
    cfg = ScenarioConfig(initial_state=(0.0, 0.0, 0.0, 5e6), t_end=1.0)
    with pytest.raises(SimulationDivergence):
        run_command(cfg, str(tmp_path))
    assert (tmp_path / "trajectory.csv").exists()
    assert "# divergence" in (tmp_path / "metrics.txt").read_text(encoding="utf-8")


def test_scenario_variants():
    assert [c.controller for c in scenario_variants(ScenarioConfig())] == ["classical"]
    assert [c.controller for c in scenario_variants(ScenarioConfig(compare=True))] == ["classical", "adaptive"]


def test_build_verdicts():
    summary = RobustnessSummary(change_time=10.0, pre_rms=0.01, post_rms=0.05,
                                recovery_start=15.0, recovered_max_abs=0.08)
    verdicts = build_verdicts({}, {"adaptive": summary})
    assert verdicts == [
        "adaptive post-change RMS > 2x pre-change RMS: yes",
        "adaptive max |e| from t=15 <= 0.1: yes",
    ]


# ── main ─────────────────────────────────────────────────────────────────────

def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


@pytest.mark.parametrize("command, defaults", [
    ("run", ["(default: results)", "(default: logs)", "(default: the file's preset)"]),
    ("selftest", ["(default: 0)", "(default: logs)"]),
])
def test_help_prints_defaults(command, defaults, capsys, monkeypatch):
    monkeypatch.delenv("PENDULUM_OUT_DIR", raising=False)
    monkeypatch.delenv("PENDULUM_LOG_DIR", raising=False)
    monkeypatch.setenv("COLUMNS", "300")
    with pytest.raises(SystemExit):
        build_parser().parse_args([command, "--help"])
    out = capsys.readouterr().out
    for default in defaults:
        assert default in out


def test_preset_choices_follow_presets():
    args = build_parser().parse_args(["run", "scenario.cfg", "--preset", "matched"])
    assert args.preset == "matched"


def test_main_run(tmp_path, capsys):
    cfg = _write(tmp_path, SHORT)
    code = main(["run", cfg, "--out", str(tmp_path / "out"), "--log-dir", str(tmp_path / "logs")])
    assert code == 0
    assert "EXPERIMENT SUMMARY" in capsys.readouterr().out
    assert (tmp_path / "out" / "trajectory.csv").exists()


def test_main_config_error(tmp_path):
    cfg = _write(tmp_path, "[sim]\nt_end = soon\n")
    assert main(["run", cfg, "--out", str(tmp_path / "out"), "--log-dir", str(tmp_path / "logs")]) == 2
    assert not (tmp_path / "out").exists()


def test_main_missing_file(tmp_path):
    code = main(["run", str(tmp_path / "nope.cfg"), "--out", str(tmp_path / "out"),
                 "--log-dir", str(tmp_path / "logs")])
    assert code == 2


def test_main_unstable_gains(tmp_path):
    cfg = _write(tmp_path, "[controller]\npreset = paper\np_mode = solved\n[sim]\nt_end = 1\n")
    assert main(["run", cfg, "--out", str(tmp_path / "out"), "--log-dir", str(tmp_path / "logs")]) == 5


def test_main_selftest(tmp_path, capsys):
    assert main(["selftest", "--log-dir", str(tmp_path / "logs")]) == 0
    assert "selftest checks passed" in capsys.readouterr().out
