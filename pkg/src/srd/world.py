"""Wire environments and scenario definitions.

Scenarios are TOML documents: a named world (conductor segments), the UAV
start state, a desired-velocity source, and optional rig/avoidance/assertion
tables. Parsing is strict: unknown keys anywhere are errors, so a typo in a
tuning knob cannot silently fall back to a default.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Union

import tomli
import tomlkit

from .geom import Segment3, UnitVec3, Vec3

GRAVITY_DOWN_DEFAULT = UnitVec3(0.0, 0.0, -1.0)

AVOIDANCE_KEYS = ("r_a", "r_s", "k_s", "a_max", "s_margin", "v_eb", "alpha_deg")
SENSOR_OVERRIDE_KEYS = (
    "azimuth_fov_deg",
    "elevation_fov_deg",
    "max_range_m",
    "bias_mean_m",
    "noise_sigma_m",
    "angular_sigma_deg",
)
SENSOR_IDS = ("front", "rear", "left", "right", "top", "bottom")


class ScenarioError(ValueError):
    """Raised on malformed scenario text: bad TOML, unknown keys, bad values."""


def default_detectability(diameter_mm: float) -> float:
    """Energy-return proxy for a conductor of the given diameter.

    Full return at >= 10 mm, half at <= 5 mm, linear ramp between. Thin
    static/comms wires reflect far less energy, which shows up as reduced
    effective range.
    """
    if diameter_mm >= 10.0:
        return 1.0
    if diameter_mm <= 5.0:
        return 0.5
    return 0.5 + 0.5 * (diameter_mm - 5.0) / 5.0


@dataclass(frozen=True, slots=True)
class Conductor:
    """A straight wire span. `detectability` scales sensing range (0, 1]."""

    geometry: Segment3
    diameter_mm: float
    detectability: float | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.diameter_mm) and self.diameter_mm > 0.0):
            raise ValueError(f"diameter_mm must be positive, got {self.diameter_mm}")
        if self.detectability is None:
            object.__setattr__(self, "detectability", default_detectability(self.diameter_mm))
        if not (0.0 < self.detectability <= 1.0):
            raise ValueError(f"detectability must be in (0, 1], got {self.detectability}")

    def radius_m(self) -> float:
        return self.diameter_mm * 1e-3 / 2.0


@dataclass(frozen=True, slots=True)
class ConstantDesired:
    """Fixed desired velocity for the whole run."""

    velocity: Vec3

    def value_at(self, t: float) -> Vec3:
        return self.velocity


@dataclass(frozen=True, slots=True)
class ScriptedDesired:
    """Zero-order-hold schedule of (t, velocity) waypoints.

    Before the first entry the desired velocity is zero (hover).
    """

    entries: tuple[tuple[float, Vec3], ...]

    def __post_init__(self) -> None:
        times = [t for t, _ in self.entries]
        if not self.entries:
            raise ValueError("scripted desired velocity needs at least one entry")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("scripted entries must have strictly increasing times")

    def value_at(self, t: float) -> Vec3:
        idx = bisect_right([e[0] for e in self.entries], t) - 1
        if idx < 0:
            return Vec3(0.0, 0.0, 0.0)
        return self.entries[idx][1]


@dataclass(frozen=True, slots=True)
class ExternalDesired:
    """Desired velocity fed live by an external pilot (the serve path)."""

    def value_at(self, t: float) -> Vec3:
        return Vec3(0.0, 0.0, 0.0)


Desired = Union[ConstantDesired, ScriptedDesired, ExternalDesired]


@dataclass(frozen=True, slots=True)
class SensorOverride:
    """Per-sensor numeric overrides applied on top of the default rig."""

    sensor_id: str
    values: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        if self.sensor_id not in SENSOR_IDS:
            raise ValueError(f"unknown sensor id {self.sensor_id!r}")
        for key, _ in self.values:
            if key not in SENSOR_OVERRIDE_KEYS:
                raise ValueError(f"unknown sensor override key {key!r}")


@dataclass(frozen=True, slots=True)
class RigOverrides:
    use_measured_fov: bool = False
    sensors: tuple[SensorOverride, ...] = ()


@dataclass(frozen=True, slots=True)
class ScenarioAssertions:
    """Pass/fail thresholds a batch run is checked against."""

    min_clearance: float | None = None


@dataclass(frozen=True)
class Scenario:
    name: str
    duration_s: float
    conductors: tuple[Conductor, ...]
    uav_start: Vec3
    uav_start_velocity: Vec3
    desired: Desired
    gravity_down: UnitVec3 = GRAVITY_DOWN_DEFAULT
    avoidance: tuple[tuple[str, float], ...] = ()
    rig: RigOverrides | None = None
    assertions: ScenarioAssertions | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("scenario name must be nonempty")
        if not (math.isfinite(self.duration_s) and self.duration_s > 0.0):
            raise ValueError(f"duration_s must be positive, got {self.duration_s}")
        for key, _ in self.avoidance:
            if key not in AVOIDANCE_KEYS:
                raise ValueError(f"unknown avoidance key {key!r}")


# --- parsing ---------------------------------------------------------------


def _err(path: str, msg: str) -> ScenarioError:
    return ScenarioError(f"{path}: {msg}")


def _expect_table(value: Any, path: str) -> dict:
    if not isinstance(value, dict):
        raise _err(path, f"expected a table, got {type(value).__name__}")
    return value


def _reject_unknown(table: dict, allowed: tuple[str, ...], path: str) -> None:
    for key in table:
        if key not in allowed:
            raise _err(path, f"unknown key {key!r} (allowed: {', '.join(allowed)})")


def _expect_float(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _err(path, f"expected a number, got {type(value).__name__}")
    out = float(value)
    if not math.isfinite(out):
        raise _err(path, "must be finite")
    return out


def _expect_bool(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise _err(path, f"expected a boolean, got {type(value).__name__}")
    return value


def _expect_str(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise _err(path, f"expected a string, got {type(value).__name__}")
    return value


def _expect_vec3(value: Any, path: str) -> Vec3:
    if not isinstance(value, list) or len(value) != 3:
        raise _err(path, "expected a 3-element array [x, y, z]")
    return Vec3(*(_expect_float(v, f"{path}[{i}]") for i, v in enumerate(value)))


def _parse_desired(table: dict, path: str) -> Desired:
    kind = _expect_str(table.get("kind"), f"{path}.kind") if "kind" in table else None
    if kind is None:
        raise _err(path, "missing required key 'kind'")
    if kind == "constant":
        _reject_unknown(table, ("kind", "velocity"), path)
        if "velocity" not in table:
            raise _err(path, "constant desired velocity needs 'velocity'")
        return ConstantDesired(_expect_vec3(table["velocity"], f"{path}.velocity"))
    if kind == "scripted":
        _reject_unknown(table, ("kind", "entries"), path)
        raw = table.get("entries")
        if not isinstance(raw, list) or not raw:
            raise _err(f"{path}.entries", "expected a nonempty array of [t, vx, vy, vz]")
        entries = []
        for i, row in enumerate(raw):
            if not isinstance(row, list) or len(row) != 4:
                raise _err(f"{path}.entries[{i}]", "expected [t, vx, vy, vz]")
            vals = [_expect_float(v, f"{path}.entries[{i}][{j}]") for j, v in enumerate(row)]
            entries.append((vals[0], Vec3(vals[1], vals[2], vals[3])))
        try:
            return ScriptedDesired(tuple(entries))
        except ValueError as e:
            raise _err(f"{path}.entries", str(e)) from e
    if kind == "external":
        _reject_unknown(table, ("kind",), path)
        return ExternalDesired()
    raise _err(f"{path}.kind", f"unknown kind {kind!r} (constant, scripted, external)")


def _parse_conductor(table: dict, path: str) -> Conductor:
    _reject_unknown(table, ("a", "b", "diameter_mm", "detectability"), path)
    for req in ("a", "b", "diameter_mm"):
        if req not in table:
            raise _err(path, f"missing required key {req!r}")
    a = _expect_vec3(table["a"], f"{path}.a")
    b = _expect_vec3(table["b"], f"{path}.b")
    diameter = _expect_float(table["diameter_mm"], f"{path}.diameter_mm")
    detect = None
    if "detectability" in table:
        detect = _expect_float(table["detectability"], f"{path}.detectability")
    try:
        return Conductor(Segment3(a, b), diameter, detect)
    except ValueError as e:
        raise _err(path, str(e)) from e


def _parse_rig(table: dict, path: str) -> RigOverrides:
    _reject_unknown(table, ("use_measured_fov", "sensors"), path)
    use_measured = False
    if "use_measured_fov" in table:
        use_measured = _expect_bool(table["use_measured_fov"], f"{path}.use_measured_fov")
    overrides = []
    raw_sensors = table.get("sensors", [])
    if not isinstance(raw_sensors, list):
        raise _err(f"{path}.sensors", "expected an array of tables")
    for i, entry in enumerate(raw_sensors):
        epath = f"{path}.sensors[{i}]"
        entry = _expect_table(entry, epath)
        _reject_unknown(entry, ("id",) + SENSOR_OVERRIDE_KEYS, epath)
        if "id" not in entry:
            raise _err(epath, "missing required key 'id'")
        sid = _expect_str(entry["id"], f"{epath}.id")
        values = tuple(
            (key, _expect_float(entry[key], f"{epath}.{key}"))
            for key in SENSOR_OVERRIDE_KEYS
            if key in entry
        )
        try:
            overrides.append(SensorOverride(sid, values))
        except ValueError as e:
            raise _err(epath, str(e)) from e
    return RigOverrides(use_measured, tuple(overrides))


def load_scenario(text: str) -> Scenario:
    """Parse scenario TOML text. Raises ScenarioError with a field path."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as e:
        raise ScenarioError(f"invalid TOML: {e}") from e

    top_allowed = (
        "name",
        "duration_s",
        "gravity_down",
        "uav",
        "conductor",
        "avoidance",
        "rig",
        "assertions",
    )
    _reject_unknown(doc, top_allowed, "scenario")
    for req in ("name", "duration_s", "uav"):
        if req not in doc:
            raise _err("scenario", f"missing required key {req!r}")

    name = _expect_str(doc["name"], "name")
    duration = _expect_float(doc["duration_s"], "duration_s")

    gravity = GRAVITY_DOWN_DEFAULT
    if "gravity_down" in doc:
        raw = _expect_vec3(doc["gravity_down"], "gravity_down")
        if raw.norm() < 1e-9:
            raise _err("gravity_down", "must be a nonzero direction")
        gravity = raw.normalized()

    uav = _expect_table(doc["uav"], "uav")
    _reject_unknown(uav, ("start", "start_velocity", "desired"), "uav")
    if "start" not in uav:
        raise _err("uav", "missing required key 'start'")
    start = _expect_vec3(uav["start"], "uav.start")
    start_vel = Vec3(0.0, 0.0, 0.0)
    if "start_velocity" in uav:
        start_vel = _expect_vec3(uav["start_velocity"], "uav.start_velocity")
    if "desired" not in uav:
        raise _err("uav", "missing required key 'desired'")
    desired = _parse_desired(_expect_table(uav["desired"], "uav.desired"), "uav.desired")

    raw_conductors = doc.get("conductor", [])
    if not isinstance(raw_conductors, list):
        raise _err("conductor", "expected an array of tables ([[conductor]])")
    conductors = tuple(
        _parse_conductor(_expect_table(c, f"conductor[{i}]"), f"conductor[{i}]")
        for i, c in enumerate(raw_conductors)
    )

    avoidance: tuple[tuple[str, float], ...] = ()
    if "avoidance" in doc:
        table = _expect_table(doc["avoidance"], "avoidance")
        _reject_unknown(table, AVOIDANCE_KEYS, "avoidance")
        avoidance = tuple((k, _expect_float(v, f"avoidance.{k}")) for k, v in table.items())

    rig = None
    if "rig" in doc:
        rig = _parse_rig(_expect_table(doc["rig"], "rig"), "rig")

    assertions = None
    if "assertions" in doc:
        table = _expect_table(doc["assertions"], "assertions")
        _reject_unknown(table, ("min_clearance",), "assertions")
        min_clear = None
        if "min_clearance" in table:
            min_clear = _expect_float(table["min_clearance"], "assertions.min_clearance")
        assertions = ScenarioAssertions(min_clearance=min_clear)

    try:
        return Scenario(
            name=name,
            duration_s=duration,
            conductors=conductors,
            uav_start=start,
            uav_start_velocity=start_vel,
            desired=desired,
            gravity_down=gravity,
            avoidance=avoidance,
            rig=rig,
            assertions=assertions,
        )
    except ValueError as e:
        raise ScenarioError(str(e)) from e


def load_scenario_file(path: str | Path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ScenarioError(f"cannot read scenario file {path}: {e}") from e
    return load_scenario(text)


# --- serialization ---------------------------------------------------------


def _vec_items(v: Vec3) -> list[float]:
    return [float(v.x), float(v.y), float(v.z)]


def dump_scenario(scenario: Scenario) -> str:
    """Serialize to TOML. load_scenario(dump_scenario(s)) equals s."""
    doc = tomlkit.document()
    doc["name"] = scenario.name
    doc["duration_s"] = float(scenario.duration_s)
    if scenario.gravity_down != GRAVITY_DOWN_DEFAULT:
        doc["gravity_down"] = _vec_items(scenario.gravity_down)

    uav = tomlkit.table()
    uav["start"] = _vec_items(scenario.uav_start)
    if scenario.uav_start_velocity != Vec3(0.0, 0.0, 0.0):
        uav["start_velocity"] = _vec_items(scenario.uav_start_velocity)
    desired = tomlkit.table()
    if isinstance(scenario.desired, ConstantDesired):
        desired["kind"] = "constant"
        desired["velocity"] = _vec_items(scenario.desired.velocity)
    elif isinstance(scenario.desired, ScriptedDesired):
        desired["kind"] = "scripted"
        desired["entries"] = [
            [float(t), float(v.x), float(v.y), float(v.z)] for t, v in scenario.desired.entries
        ]
    else:
        desired["kind"] = "external"
    uav["desired"] = desired
    doc["uav"] = uav

    if scenario.conductors:
        aot = tomlkit.aot()
        for cond in scenario.conductors:
            t = tomlkit.table()
            t["a"] = _vec_items(cond.geometry.a)
            t["b"] = _vec_items(cond.geometry.b)
            t["diameter_mm"] = float(cond.diameter_mm)
            if cond.detectability != default_detectability(cond.diameter_mm):
                t["detectability"] = float(cond.detectability)
            aot.append(t)
        doc["conductor"] = aot

    if scenario.avoidance:
        table = tomlkit.table()
        for key, value in scenario.avoidance:
            table[key] = float(value)
        doc["avoidance"] = table

    if scenario.rig is not None:
        table = tomlkit.table()
        table["use_measured_fov"] = scenario.rig.use_measured_fov
        if scenario.rig.sensors:
            aot = tomlkit.aot()
            for ov in scenario.rig.sensors:
                t = tomlkit.table()
                t["id"] = ov.sensor_id
                for key, value in ov.values:
                    t[key] = float(value)
                aot.append(t)
            table["sensors"] = aot
        doc["rig"] = table

    if scenario.assertions is not None and scenario.assertions.min_clearance is not None:
        table = tomlkit.table()
        table["min_clearance"] = float(scenario.assertions.min_clearance)
        doc["assertions"] = table

    return tomlkit.dumps(doc)


# --- builtin scenarios -----------------------------------------------------

# Transmission corridor crossing. Published figures give wire-to-wire
# spacing (3 m), stack height (~9 m between bundle and ground wire), span
# length (~35 m) and tallest point (~17 m); the exact layout below is an
# assumption consistent with all of them: apex-down equilateral phase
# triangle (side 3 m) plus a thin ground wire on top.
_TRIANGLE_3PHASE = """\
# Three-phase corridor crossing: equilateral phase bundle (3 m sides,
# apex down at 8 m) plus a 10 mm ground wire at 17 m, spans 35 m along Y.
# The UAV crosses the corridor at 5 m/s starting 25 m out, half a meter
# below the apex phase: uncorrected flight would pass inside the 1 m
# envelope, so the pass requires an active deflection.
name = "triangle_3phase"
duration_s = 16.0

[uav]
start = [-25.0, 0.0, 7.5]
start_velocity = [5.0, 0.0, 0.0]

[uav.desired]
kind = "constant"
velocity = [5.0, 0.0, 0.0]

[[conductor]]  # phase A (apex, lowest)
a = [0.0, -17.5, 8.0]
b = [0.0, 17.5, 8.0]
diameter_mm = 20.0

[[conductor]]  # phase B
a = [-1.5, -17.5, 10.598076211353316]
b = [-1.5, 17.5, 10.598076211353316]
diameter_mm = 20.0

[[conductor]]  # phase C
a = [1.5, -17.5, 10.598076211353316]
b = [1.5, 17.5, 10.598076211353316]
diameter_mm = 20.0

[[conductor]]  # ground wire, tallest point of the corridor
a = [0.0, -17.5, 17.0]
b = [0.0, 17.5, 17.0]
diameter_mm = 10.0

[assertions]
min_clearance = 0.5
"""

# A nearly invisible static wire: 1.2 mm steel, detectability floor.
_THIN_WIRE = """\
# Thin (1.2 mm) wire crossing at 10 m height; the UAV approaches at 3 m/s.
# Detectability floor halves the effective sensing range.
name = "thin_wire"
duration_s = 12.0

[uav]
start = [-15.0, 0.0, 10.0]
start_velocity = [3.0, 0.0, 0.0]

[uav.desired]
kind = "constant"
velocity = [3.0, 0.0, 0.0]

[[conductor]]
a = [0.0, -17.5, 10.0]
b = [0.0, 17.5, 10.0]
diameter_mm = 1.2

[assertions]
min_clearance = 0.2
"""

# Fast head-on approach at the wire's exact height: the emergency brake
# must fire because the tangential field alone cannot shed 10 m/s in time.
_SINGLE_WIRE_HEAD_ON = """\
# Head-on 10 m/s approach to a single 20 mm wire at matching height.
name = "single_wire_head_on"
duration_s = 10.0

[uav]
start = [-30.0, 0.0, 10.0]
start_velocity = [10.0, 0.0, 0.0]

[uav.desired]
kind = "constant"
velocity = [10.0, 0.0, 0.0]

[[conductor]]
a = [0.0, -17.5, 10.0]
b = [0.0, 17.5, 10.0]
diameter_mm = 20.0

[assertions]
min_clearance = 0.5
"""

_EMPTY = """\
# No obstacles: cruise straight at 5 m/s. Baseline for logging/latency.
name = "empty"
duration_s = 10.0

[uav]
start = [0.0, 0.0, 10.0]
start_velocity = [5.0, 0.0, 0.0]

[uav.desired]
kind = "constant"
velocity = [5.0, 0.0, 0.0]
"""

_BUILTIN_TEXT = {
    "triangle_3phase": _TRIANGLE_3PHASE,
    "thin_wire": _THIN_WIRE,
    "single_wire_head_on": _SINGLE_WIRE_HEAD_ON,
    "empty": _EMPTY,
}

BUILTIN_NAMES = tuple(_BUILTIN_TEXT)


def builtin_scenario_text(name: str) -> str:
    """The TOML source of a builtin scenario (commented, human-editable)."""
    if name not in _BUILTIN_TEXT:
        raise ScenarioError(f"unknown builtin scenario {name!r} (have: {', '.join(BUILTIN_NAMES)})")
    return _BUILTIN_TEXT[name]


def builtin_scenario(name: str) -> Scenario:
    return load_scenario(builtin_scenario_text(name))
