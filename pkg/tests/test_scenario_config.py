"""
Scenario file tests: defaults, presets, schedules, error reporting and the
format/parse round trip.
"""

import os

import pytest

from shared.errors import ConfigError
from pendulum.control import PAPER_GAINS, apply_preset
from pendulum.scenario_config import format_config, load_config, parse_config, parse_schedule_line
from pendulum.sim import ParameterSchedule, ScenarioConfig, ScheduleEvent

SAMPLE = """
# nominal plant, both controllers
[reference]
amplitude = 0.2
frequency = 1.0

[controller]
type = adaptive
preset = stable
gamma1 = 40

[sim]
t_end = 20
dt = 0.001
compare = yes
schedule.1 = step m1 1.3 at 10

[schedule.2]
kind = ramp
target = c1
magnitude = 1.5
start = 5
end = 10
"""


# ── Parsing ──────────────────────────────────────────────────────────────────

def test_empty_file_gives_defaults():
    assert parse_config("") == ScenarioConfig()
    assert parse_config("# only a comment\n\n") == ScenarioConfig()


def test_sample_file():
    cfg = parse_config(SAMPLE)
    assert cfg.controller == "adaptive"
    assert cfg.preset == "stable"
    assert cfg.adaptive.gamma1 == 40.0
    assert cfg.adaptive.gamma2 == 6.0
    assert cfg.compare is True
    assert cfg.t_end == 20.0
    assert cfg.schedule.events == (
        ScheduleEvent(target="m1", kind="step", magnitude=1.3, start=10.0),
        ScheduleEvent(target="c1", kind="ramp", magnitude=1.5, start=5.0, end=10.0),
    )


def test_bare_keys_belong_to_sim():
    cfg = parse_config("t_end = 5\nmeasurement = backward-difference\n")
    assert cfg.t_end == 5.0
    assert cfg.measurement == "backward-difference"


def test_paper_preset_selects_adaptive():
    cfg = parse_config("[controller]\npreset = paper\n")
    assert cfg.controller == "adaptive"
    assert cfg.adaptive == apply_preset("paper")
    assert cfg.adaptive.gains == PAPER_GAINS


def test_preset_argument_overrides_file():
    cfg = parse_config("[controller]\npreset = stable\n", preset="paper")
    assert cfg.preset == "paper"
    assert cfg.adaptive.order == 4


def test_explicit_type_wins_over_preset():
    cfg = parse_config("[controller]\ntype = classical\nkd = 3\n", preset="stable")
    assert cfg.controller == "classical"
    assert cfg.classical.kd == 3.0


def test_dotted_keys_in_any_section():
    cfg = parse_config("[plant]\nreference.amplitude = 0.1\nsim.t_end = 3\n")
    assert cfg.reference.amplitude == 0.1
    assert cfg.t_end == 3.0


@pytest.mark.parametrize("text, fields", [
    ("step m1 1.3 at 10", {"kind": "step", "target": "m1", "magnitude": 1.3, "start": 10.0}),
    ("ramp c1 1.5 from 5 to 10", {"kind": "ramp", "target": "c1", "magnitude": 1.5, "start": 5.0, "end": 10.0}),
    ("sine g 0.1 period 2", {"kind": "sine", "target": "g", "magnitude": 0.1, "period": 2.0}),
    ("sine g 0.1 period 2 at 4", {"kind": "sine", "target": "g", "magnitude": 0.1, "period": 2.0, "start": 4.0}),
])
def test_schedule_lines(text, fields):
    assert parse_schedule_line(text) == fields


@pytest.mark.parametrize("text", ["step m1", "step m1 1.3 10", "ramp c1 1.5 from 5", "step m1 x at 10"])
def test_bad_schedule_lines(text):
    with pytest.raises(ConfigError):
        parse_schedule_line(text, 4)


# ── Errors ───────────────────────────────────────────────────────────────────

@pytest.mark.parametrize("text, line", [
    ("t_end = 5\n[nowhere]\n", 2),
    ("[plant]\nmass = 1\n", 2),
    ("t_end = 5\nt_end = 6\n", 2),
    ("[sim]\n\njust words\n", 3),
    ("[sim]\ndt =\n", 2),
    ("[sim]\ndt = fast\n", 2),
    ("[sim]\ncompare = maybe\n", 2),
    ("schedule.1 = step m1 1.3 at 10\nschedule.1 = step c1 1.5 at 10\n", 2),
    ("schedule.x = step m1 1.3 at 10\n", 1),
    ("[schedule.1]\nkind = step\ntarget = m1\n", 1),
])
def test_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}:")


@pytest.mark.parametrize("text, key", [
    ("[plant]\nm1 = inf\n", "plant.m1"),
    ("[sim]\ndt = -1\n", "dt"),
    ("[controller]\npreset = stable\ngains = 1, 2, 3\n", "controller"),
    ("[controller]\ntype = fuzzy\n", "controller.type"),
    ("[sim]\ninitial_state = 0, 0\n", "initial_state"),
])
def test_invalid_values_name_the_key(text, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert key in str(info.value)


def test_unknown_preset():
    with pytest.raises(ConfigError):
        parse_config("[controller]\npreset = fastest\n")


def test_config_error_exit_code():
    assert ConfigError("x").exit_code == 2


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_load_file(tmp_path):
    path = tmp_path / "scenario.cfg"
    path.write_text(SAMPLE, encoding="utf-8")
    assert load_config(path) == parse_config(SAMPLE)


# ── Round trip ───────────────────────────────────────────────────────────────

@pytest.mark.parametrize("cfg", [
    ScenarioConfig(),
    parse_config(SAMPLE),
    parse_config("[controller]\npreset = paper\n[sim]\nseed = 7\ninitial_state = 0, 0, 0.05, 0\n"),
    ScenarioConfig(
        schedule=ParameterSchedule(events=(
            ScheduleEvent(target="g", kind="sine", magnitude=0.05, period=3.0, start=2.0),
        )),
        measurement="backward-difference",
        t_end=7.5,
    ),
])
def test_format_parse_round_trip(cfg):
    text = format_config(cfg)
    assert parse_config(text) == cfg
    assert format_config(parse_config(text)) == text


# ── Shipped scenarios ────────────────────────────────────────────────────────

_CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "config")


@pytest.mark.parametrize("name", sorted(n for n in os.listdir(_CONFIG_DIR) if n.endswith(".cfg")))
def test_shipped_scenarios_parse(name):
    cfg = load_config(os.path.join(_CONFIG_DIR, name))
    assert parse_config(format_config(cfg)) == cfg
