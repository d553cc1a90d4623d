"""Scenario files: nested YAML sections with defaults taken from the reference setup.

Powers are given in dBm, distances in meters. Unknown sections or keys are
rejected with the offending line number.

Example::

    system:
      source_power_dbm: 30
      interferer_power_dbm: 20     # null for no interferers
      rate: 1.0
    topology:
      d_ir: [12, 13, 14]
    battery:
      levels: 20
    simulation:
      blocks: 1000000
      seed: 7
    sweep:
      variable: source_power_dbm
      grid: [10, 20, 30, 40, 50]
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import yaml

from .channel import LinkBudget, SystemConfig, Topology, config_from_topology, dbm_to_watts
from .markov import BatteryModel
from .simulator import BATTERY_MODES, FIDELITIES, SimConfig

DEFAULTS = {
    "system": {
        "source_power_dbm": 30.0,
        "interferer_power_dbm": 20.0,
        "efficiency": 0.5,
        "nakagami_m": 2,
        "antennas": 4,
        "noise_relay_dbm": -80.0,
        "noise_dest_dbm": -80.0,
        "rate": 1.0,
    },
    "topology": {
        "d_sd": 20.0,
        "d_sr": 6.0,
        "d_ir": [12.0, 13.0, 14.0],
        "pathloss_exponent": 2.0,
    },
    "battery": {
        "capacity": 0.5,
        "levels": 90,
    },
    "simulation": {
        "blocks": 1_000_000,
        "seed": 0,
        "fidelity": "scalar",
        "battery": "discrete",
        "baseline_rate_compensation": True,
    },
    "sweep": {
        "variable": "source_power_dbm",
        "grid": [10.0, 20.0, 30.0, 40.0, 50.0],
    },
}

SWEEP_VARIABLES = ("source_power_dbm", "interferer_power_dbm", "rate", "levels_q", "capacity")

# levels used by sweeps unless the scenario pins them (full scale is 90)
DESK_LEVELS = 20


class ScenarioError(ValueError):
    """Invalid scenario; ``line`` is 1-based when known."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = f"line {line}: " if line else ""
        what = f"{key}: " if key else ""
        super().__init__(f"{where}{what}{message}")
        self.key = key
        self.line = line


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    grid: tuple

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ScenarioError(f"unknown sweep variable {self.variable!r}", "sweep.variable")
        grid = tuple(float(v) for v in self.grid)
        if not grid:
            raise ScenarioError("sweep grid is empty", "sweep.grid")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ScenarioError("sweep grid must be strictly increasing", "sweep.grid")
        object.__setattr__(self, "grid", grid)


@dataclass(frozen=True)
class Scenario:
    values: dict = field(default_factory=lambda: _merge({}))
    explicit: frozenset = frozenset()

    def get(self, section: str, key: str):
        return self.values[section][key]

    def with_value(self, section: str, key: str, value) -> "Scenario":
        vals = {s: dict(kv) for s, kv in self.values.items()}
        vals[section][key] = value
        return Scenario(vals, self.explicit | {f"{section}.{key}"})

    def system_config(self) -> SystemConfig:
        s = self.values["system"]
        t = self.values["topology"]
        p_int = s["interferer_power_dbm"]
        if p_int is None:
            powers, d_ir = (), ()
        else:
            d_ir = tuple(t["d_ir"])
            p_list = list(p_int) if isinstance(p_int, (list, tuple)) else [p_int] * len(d_ir)
            if len(p_list) != len(d_ir):
                raise ScenarioError(f"{len(p_list)} interferer powers for {len(d_ir)} distances",
                                    "system.interferer_power_dbm")
            powers = tuple(dbm_to_watts(p) for p in p_list)
        budget = LinkBudget(
            source_power=dbm_to_watts(s["source_power_dbm"]),
            interferer_powers=powers,
            efficiency=s["efficiency"],
            nakagami_m=s["nakagami_m"],
            antennas=s["antennas"],
            noise_relay=dbm_to_watts(s["noise_relay_dbm"]),
            noise_dest=dbm_to_watts(s["noise_dest_dbm"]),
            rate=s["rate"],
        )
        topo = Topology(d_sd=t["d_sd"], d_sr=t["d_sr"], d_ir=d_ir,
                        pathloss_exponent=t["pathloss_exponent"])
        return config_from_topology(budget, topo)

    def battery(self) -> BatteryModel:
        b = self.values["battery"]
        return BatteryModel(capacity=b["capacity"], levels=b["levels"])

    def sim_config(self) -> SimConfig:
        s = self.values["simulation"]
        return SimConfig(num_blocks=s["blocks"], seed=s["seed"], fidelity=s["fidelity"],
                         battery_mode=s["battery"])

    def sweep_spec(self) -> SweepSpec:
        s = self.values["sweep"]
        return SweepSpec(variable=s["variable"], grid=tuple(s["grid"]))

    def at(self, variable: str, value: float) -> "Scenario":
        """Scenario with one sweep variable set to ``value``."""
        if variable == "source_power_dbm":
            return self.with_value("system", "source_power_dbm", value)
        if variable == "interferer_power_dbm":
            return self.with_value("system", "interferer_power_dbm", value)
        if variable == "rate":
            return self.with_value("system", "rate", value)
        if variable == "levels_q":
            if value != int(value):
                raise ScenarioError(f"levels must be an integer, got {value}", "battery.levels")
            return self.with_value("battery", "levels", int(value))
        if variable == "capacity":
            return self.with_value("battery", "capacity", value)
        raise ScenarioError(f"unknown sweep variable {variable!r}", "sweep.variable")


def _merge(data: dict) -> dict:
    vals = {s: dict(kv) for s, kv in DEFAULTS.items()}
    for section, kv in data.items():
        vals[section].update(kv)
    return vals


_TYPES = {
    "system.nakagami_m": int,
    "system.antennas": int,
    "battery.levels": int,
    "simulation.blocks": int,
    "simulation.seed": int,
    "simulation.fidelity": str,
    "simulation.battery": str,
    "simulation.baseline_rate_compensation": bool,
    "sweep.variable": str,
}


def _check_value(path: str, value, line: int | None):
    kind = _TYPES.get(path)
    if path == "system.interferer_power_dbm":
        if value is None:
            return None
        if isinstance(value, list):
            return [_number(path, v, line) for v in value]
        return _number(path, value, line)
    if path in ("topology.d_ir", "sweep.grid"):
        if not isinstance(value, list):
            raise ScenarioError("expected a list of numbers", path, line)
        return [_number(path, v, line) for v in value]
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ScenarioError(f"expected an integer, got {value!r}", path, line)
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise ScenarioError(f"expected true/false, got {value!r}", path, line)
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ScenarioError(f"expected a string, got {value!r}", path, line)
        allowed = {"simulation.fidelity": FIDELITIES, "simulation.battery": BATTERY_MODES,
                   "sweep.variable": SWEEP_VARIABLES}[path]
        if value not in allowed:
            raise ScenarioError(f"must be one of {', '.join(allowed)}; got {value!r}", path, line)
        return value
    return _number(path, value, line)


def _number(path, value, line):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ScenarioError(f"expected a finite number, got {value!r}", path, line)
    return float(value)


def parse_scenario(text: str) -> Scenario:
    """Parse scenario text; every missing key keeps its default."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"malformed YAML: {getattr(exc, 'problem', exc)}",
                            line=mark.line + 1 if mark else None) from None
    if root is None:
        return Scenario()
    if not isinstance(root, yaml.MappingNode):
        raise ScenarioError("top level must be a mapping of sections", line=root.start_mark.line + 1)

    data: dict = {}
    explicit = set()
    constructor = yaml.SafeLoader("")
    for sec_node, body in root.value:
        section = sec_node.value
        line = sec_node.start_mark.line + 1
        if section not in DEFAULTS:
            raise ScenarioError(f"unknown section (expected one of {', '.join(DEFAULTS)})", section, line)
        if section in data:
            raise ScenarioError("duplicate section", section, line)
        data[section] = {}
        if isinstance(body, yaml.ScalarNode) and body.value in ("", "~", "null"):
            continue
        if not isinstance(body, yaml.MappingNode):
            raise ScenarioError("section must be a mapping", section, line)
        for key_node, val_node in body.value:
            key = key_node.value
            path = f"{section}.{key}"
            kline = key_node.start_mark.line + 1
            if key not in DEFAULTS[section]:
                raise ScenarioError("unknown key", path, kline)
            if key in data[section]:
                raise ScenarioError("duplicate key", path, kline)
            value = constructor.construct_object(val_node, deep=True)
            data[section][key] = _check_value(path, value, kline)
            explicit.add(path)
    return Scenario(_merge(data), frozenset(explicit))


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def validate_scenario(scn: Scenario) -> Scenario:
    """Build every derived object once so range errors surface as :class:`ScenarioError`."""
    try:
        scn.system_config()
        scn.battery()
        scn.sim_config()
        scn.sweep_spec()
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    return scn


def desk_scale(scn: Scenario) -> Scenario:
    """Sweep default: fewer battery levels unless the file sets them."""
    if "battery.levels" in scn.explicit:
        return scn
    return replace(scn, values={**scn.values, "battery": {**scn.values["battery"], "levels": DESK_LEVELS}})
