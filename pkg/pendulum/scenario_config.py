#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Scenario file reader and writer.

Scenario files are line oriented:

    # comment
    t_end = 20                      # bare keys before any header belong to [sim]
    [controller]
    type = adaptive
    preset = stable
    gains = 25, 150
    [schedule.1]
    kind = step
    target = m1
    magnitude = 1.3
    start = 10
    [sim]
    schedule.2 = ramp c1 1.5 from 5 to 10   # dotted keys work in any section

Sections: [plant], [reference], [controller], [sim], [schedule.N].
One-line schedule forms:
    step <target> <magnitude> at <start>
    ramp <target> <magnitude> from <start> to <end>
    sine <target> <magnitude> period <period> [at <start>]

Unknown keys are errors. Presets are applied first, explicit controller keys
override them.
"""

import logging
import re

from pydantic import ValidationError

from shared.errors import ConfigError
from pendulum.control import PRESETS, AdaptiveControllerConfig, FLControllerConfig, ReferenceSignal
from pendulum.plant import PARAM_NAMES, PhysicalParams
from pendulum.sim import ParameterSchedule, ScenarioConfig, ScheduleEvent

logger = logging.getLogger(__name__)

SECTIONS = ("plant", "reference", "controller", "sim")

_HEADER = re.compile(r'^\[\s*([A-Za-z_][\w.]*)\s*\]$')
_KEY = re.compile(r'^[A-Za-z_][\w.]*$')
_SCHEDULE_SECTION = re.compile(r'^schedule\.(\d+)$')
_TRUE = ("true", "yes", "on", "1")
_FALSE = ("false", "no", "off", "0")


# ============================================================================
# Value converters
# ============================================================================

def _float(text):
    return float(text)


def _int(text):
    return int(text)


def _floats(text):
    return tuple(float(part) for part in text.split(",") if part.strip())


def _pair(text):
    values = _floats(text)
    if len(values) != 2:
        raise ValueError(f"expected two comma separated numbers, got {len(values)}")
    return values


def _bool(text):
    lowered = text.lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ValueError(f"expected a boolean (true/false), got '{text}'")


def _word(text):
    return text


_KEYS = {
    "plant": {name: _float for name in PARAM_NAMES},
    "reference": {"amplitude": _float, "frequency": _float},
    "controller": {
        "type": _word,
        "preset": _word,
        "kd": _float,
        "kp": _float,
        "order": _int,
        "gains": _floats,
        "gamma1": _float,
        "gamma2": _float,
        "q": _floats,
        "g_floor": _float,
        "theta_cap": _float,
        "p_mode": _word,
        "init_mode": _word,
        "derivative_tau": _float,
        "centers": _int,
        "x2_domain": _pair,
        "x3_domain": _pair,
        "x4_domain": _pair,
    },
    "sim": {
        "dt": _float,
        "t_end": _float,
        "measurement": _word,
        "seed": _int,
        "compare": _bool,
        "initial_state": _floats,
        "settle_threshold": _float,
    },
    "schedule": {
        "kind": _word,
        "target": _word,
        "magnitude": _float,
        "start": _float,
        "end": _float,
        "period": _float,
    },
}

_CLASSICAL_KEYS = ("kd", "kp")


# ============================================================================
# Parsing
# ============================================================================

def parse_schedule_line(text, line=None):
    """Parse a one-line schedule event such as 'step m1 1.3 at 10'.

    Args:
        text (str): Event description
        line (int): Line number for error messages

    Returns:
        dict: ScheduleEvent fields
    """
    tokens = text.split()
    if len(tokens) < 3:
        raise ConfigError(f"schedule event needs '<kind> <target> <magnitude> ...', got '{text}'", line)

    kind, target, magnitude = tokens[:3]
    try:
        fields = {"kind": kind, "target": target, "magnitude": float(magnitude)}
        rest = tokens[3:]
        if kind == "step" and len(rest) == 2 and rest[0] == "at":
            fields["start"] = float(rest[1])
        elif kind == "ramp" and len(rest) == 4 and rest[0] == "from" and rest[2] == "to":
            fields["start"] = float(rest[1])
            fields["end"] = float(rest[3])
        elif kind == "sine" and len(rest) in (2, 4) and rest[0] == "period":
            fields["period"] = float(rest[1])
            if len(rest) == 4:
                if rest[2] != "at":
                    raise ConfigError(f"expected 'at <start>' after the period in '{text}'", line)
                fields["start"] = float(rest[3])
        else:
            raise ConfigError(
                f"cannot read schedule event '{text}'; expected 'step <target> <m> at <t>', "
                f"'ramp <target> <m> from <t0> to <t1>' or 'sine <target> <m> period <T> [at <t>]'",
                line,
            )
    except ValueError as e:
        raise ConfigError(f"bad number in schedule event '{text}': {str(e)}", line) from e
    return fields


def _split_key(section, key, line):
    """Resolve a key to (section, name), honouring dotted absolute keys"""
    if "." in key:
        head, name = key.split(".", 1)
        if head == "schedule":
            if not name.isdigit():
                raise ConfigError(f"schedule keys look like 'schedule.N', got '{key}'", line)
            return f"schedule.{int(name)}", None
        if head not in SECTIONS:
            raise ConfigError(f"unknown key '{key}'", line)
        return head, name
    return section, key


def _read_entries(text):
    """First pass: section/key/value triples with their line numbers"""
    entries = {}
    schedules = {}
    section = "sim"

    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue

        header = _HEADER.match(stripped)
        if header:
            section = header.group(1)
            match = _SCHEDULE_SECTION.match(section)
            if match:
                section = f"schedule.{int(match.group(1))}"
                schedules.setdefault(section, {"_line": lineno})
            elif section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue

        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value' or '[section]', got '{stripped}'", lineno)

        key, value = (part.strip() for part in stripped.split("=", 1))
        if not _KEY.match(key):
            raise ConfigError(f"invalid key '{key}'", lineno)
        if not value:
            raise ConfigError(f"missing value for '{key}'", lineno)

        target_section, name = _split_key(section, key, lineno)

        if target_section.startswith("schedule."):
            if name is None:
                if target_section in schedules:
                    raise ConfigError(f"{target_section} is defined twice", lineno)
                schedules[target_section] = dict(parse_schedule_line(value, lineno), _line=lineno)
                continue
            converters = _KEYS["schedule"]
            bucket = schedules.setdefault(target_section, {"_line": lineno})
        else:
            converters = _KEYS[target_section]
            bucket = entries.setdefault(target_section, {})

        if name not in converters:
            raise ConfigError(f"unknown key '{target_section}.{name}'", lineno)
        if name in bucket:
            raise ConfigError(f"duplicate key '{target_section}.{name}'", lineno)
        try:
            bucket[name] = converters[name](value)
        except ValueError as e:
            raise ConfigError(f"invalid value for '{target_section}.{name}': {str(e)}", lineno) from e

    return entries, schedules


def _validation_message(section, error):
    details = []
    for item in error.errors():
        location = ".".join(str(part) for part in item.get("loc", ()))
        where = f"{section}.{location}" if location else section
        details.append(f"{where}: {item.get('msg')}")
    return "invalid value for " + "; ".join(details)


def parse_config(text, preset=None):
    """Parse scenario text into a validated ScenarioConfig.

    Args:
        text (str): Scenario file content
        preset (str): Preset that replaces the one named in the file; it also
            selects the adaptive controller unless controller.type is given

    Returns:
        ScenarioConfig: Validated scenario

    Raises:
        ConfigError: syntax error (with line number) or invalid value (naming the key)
    """
    entries, schedules = _read_entries(text)
    controller = dict(entries.get("controller", {}))

    controller_type = controller.pop("type", None)
    file_preset = controller.pop("preset", None)
    preset = preset or file_preset
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"unknown preset '{preset}', expected one of {sorted(PRESETS)}")
    if controller_type is None:
        controller_type = "adaptive" if preset is not None else "classical"
    if controller_type not in ("classical", "adaptive"):
        raise ConfigError(f"invalid value for 'controller.type': expected classical or adaptive, got '{controller_type}'")

    classical = {key: controller.pop(key) for key in _CLASSICAL_KEYS if key in controller}
    adaptive = dict(PRESETS[preset]) if preset else {}
    adaptive.update(controller)
    if preset:
        logger.info(f"Applied controller preset '{preset}'")

    sim = dict(entries.get("sim", {}))
    if "initial_state" in sim and len(sim["initial_state"]) != 4:
        raise ConfigError(f"sim.initial_state needs 4 values, got {len(sim['initial_state'])}")

    events = []
    for name in sorted(schedules, key=lambda s: int(s.split(".")[1])):
        fields = dict(schedules[name])
        line = fields.pop("_line")
        try:
            events.append(ScheduleEvent(**fields))
        except ValidationError as e:
            raise ConfigError(_validation_message(name, e), line) from e

    parts = [
        ("plant", PhysicalParams, entries.get("plant", {})),
        ("reference", ReferenceSignal, entries.get("reference", {})),
        ("controller", FLControllerConfig, classical),
        ("controller", AdaptiveControllerConfig, adaptive),
    ]
    built = []
    for section, model, values in parts:
        try:
            built.append(model(**values))
        except ValidationError as e:
            raise ConfigError(_validation_message(section, e)) from e

    plant, reference_signal, classical_cfg, adaptive_cfg = built
    try:
        return ScenarioConfig(
            controller=controller_type,
            preset=preset,
            plant=plant,
            reference=reference_signal,
            classical=classical_cfg,
            adaptive=adaptive_cfg,
            schedule=ParameterSchedule(events=tuple(events)),
            **sim,
        )
    except ValidationError as e:
        raise ConfigError(_validation_message("sim", e)) from e


def load_config(path, preset=None):
    """Read and parse a scenario file"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read scenario file {path}: {str(e)}") from e
    logger.info(f"Loaded scenario {path}")
    return parse_config(text, preset=preset)


# ============================================================================
# Formatting
# ============================================================================

def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def format_config(cfg):
    """Serialise a ScenarioConfig; parse_config of the result gives an equal config.

    Args:
        cfg (ScenarioConfig): Scenario

    Returns:
        str: Scenario text with every value explicit
    """
    lines = ["[plant]"]
    lines += [f"{name} = {_format_value(getattr(cfg.plant, name))}" for name in PARAM_NAMES]

    lines += ["", "[reference]"]
    lines += [f"{name} = {_format_value(getattr(cfg.reference, name))}" for name in ("amplitude", "frequency")]

    lines += ["", "[controller]", f"type = {cfg.controller}"]
    if cfg.preset:
        lines.append(f"preset = {cfg.preset}")
    lines += [f"{name} = {_format_value(getattr(cfg.classical, name))}" for name in _CLASSICAL_KEYS]
    for name in AdaptiveControllerConfig.model_fields:
        lines.append(f"{name} = {_format_value(getattr(cfg.adaptive, name))}")

    lines += ["", "[sim]"]
    for name in _KEYS["sim"]:
        lines.append(f"{name} = {_format_value(getattr(cfg, name))}")

    for index, event in enumerate(cfg.schedule.events, start=1):
        lines += ["", f"[schedule.{index}]"]
        for name in _KEYS["schedule"]:
            value = getattr(event, name)
            if value is not None:
                lines.append(f"{name} = {_format_value(value)}")

    return "\n".join(lines) + "\n"
