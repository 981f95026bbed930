"""Closed-loop simulation: point-mass UAV, radar ticking, avoidance, logging.

The plant tracks velocity commands through a first-order lag with an
acceleration clamp; physics runs at a fixed fine step while the radar and
controller tick at their own (coarser) rates with zero-order hold between
ticks. Runs are fully deterministic per (scenario, config, seed).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import avoid, radar
from .geom import Pose, Vec3, clamp_magnitude, closest_point_on_segment
from .world import ExternalDesired, Scenario

YAW_POLICIES = ("face_desired", "fixed")


@dataclass(frozen=True)
class UavState:
    position: Vec3  # world, m
    velocity: Vec3  # world, m/s
    yaw: float  # rad, world +Z
    t: float  # s


@dataclass(frozen=True)
class SimConfig:
    physics_dt: float = 0.01
    radar_rate_hz: float = 10.0
    controller_rate_hz: float = 10.0
    tau_v: float = 0.25  # velocity-tracking time constant, s
    a_max_dyn: float = 10.0  # plant acceleration limit, >= controller a_max
    v_max_hard: float = 15.0
    collision_radius: float = 0.2
    seed: int = 0
    yaw_policy: str = "face_desired"
    fixed_yaw: float = 0.0

    def __post_init__(self) -> None:
        if self.physics_dt <= 0.0:
            raise ValueError("physics_dt must be positive")
        for rate in (self.radar_rate_hz, self.controller_rate_hz):
            if rate <= 0.0:
                raise ValueError("rates must be positive")
            steps = 1.0 / (rate * self.physics_dt)
            if abs(steps - round(steps)) > 1e-9:
                raise ValueError(f"rate {rate} Hz does not divide 1/physics_dt evenly")
        if self.tau_v <= 0.0:
            raise ValueError("tau_v must be positive")
        if self.a_max_dyn <= 0.0 or self.v_max_hard <= 0.0 or self.collision_radius <= 0.0:
            raise ValueError("a_max_dyn, v_max_hard and collision_radius must be positive")
        if self.yaw_policy not in YAW_POLICIES:
            raise ValueError(f"yaw_policy must be one of {YAW_POLICIES}")

    def steps_per_controller_tick(self) -> int:
        return round(1.0 / (self.controller_rate_hz * self.physics_dt))

    def steps_per_radar_tick(self) -> int:
        return round(1.0 / (self.radar_rate_hz * self.physics_dt))


@dataclass(frozen=True)
class Sample:
    """One controller tick: state before the tick and the command it made."""

    t: float
    state: UavState
    v_u: Vec3  # world
    v_out: Vec3  # world
    mode: avoid.Mode
    detections: tuple[radar.Detection, ...]  # body frame


@dataclass(frozen=True)
class Metrics:
    min_clearance: float
    collided: bool
    max_speed: float
    modes_visited: frozenset[str]
    duration: float


@dataclass
class RunLog:
    scenario_name: str
    seed: int
    cfg: SimConfig
    samples: list[Sample] = field(default_factory=list)
    dense: list[tuple[float, Vec3]] = field(default_factory=list)
    metrics: Metrics | None = None


def step_dynamics(state: UavState, v_cmd: Vec3, cfg: SimConfig) -> UavState:
    """First-order velocity tracking with acceleration clamp, semi-implicit."""
    accel = clamp_magnitude((v_cmd - state.velocity) / cfg.tau_v, cfg.a_max_dyn)
    velocity = clamp_magnitude(state.velocity + accel * cfg.physics_dt, cfg.v_max_hard)
    position = state.position + velocity * cfg.physics_dt
    return UavState(position, velocity, state.yaw, state.t + cfg.physics_dt)


def _clearance(position: Vec3, scenario: Scenario) -> float:
    best = math.inf
    for cond in scenario.conductors:
        d = (closest_point_on_segment(position, cond.geometry) - position).norm()
        if d < best:
            best = d
    return best


class Engine:
    """Steppable simulation core shared by batch runs and the live service.

    External code drives it one physics step at a time via advance(); the
    engine schedules radar and controller ticks internally and records a
    Sample per controller tick. The live service injects pilot commands
    with set_desired_override(), applied only at controller ticks.
    """

    def __init__(
        self,
        scenario: Scenario,
        rig: radar.RadarRig | None = None,
        params: avoid.AvoidanceParams | None = None,
        cfg: SimConfig | None = None,
        pa: radar.PaModel | None = None,
    ) -> None:
        self.scenario = scenario
        self.cfg = cfg if cfg is not None else SimConfig()
        self.rig = rig if rig is not None else radar.rig_from_scenario(scenario)
        self.params = params if params is not None else avoid.params_from_scenario(scenario)
        self.pa = pa if pa is not None else radar.DEFAULT_PA
        self._steps_per_ctrl = self.cfg.steps_per_controller_tick()
        self._steps_per_radar = self.cfg.steps_per_radar_tick()
        self._override: Vec3 | None = None
        self.reset()

    def reset(self, seed: int | None = None) -> None:
        if seed is not None:
            self.cfg = SimConfig(**{**self.cfg.__dict__, "seed": seed})
        self.rng = np.random.default_rng(self.cfg.seed)
        self.state = UavState(
            self.scenario.uav_start, self.scenario.uav_start_velocity, 0.0, 0.0
        )
        self._apply_yaw_policy(self._desired_at(0.0))
        self.ctrl_state = avoid.AvoidanceState()
        self.step_index = 0
        self.v_cmd_world = self.scenario.uav_start_velocity
        self.latest_detections: tuple[radar.Detection, ...] = ()
        self.samples: list[Sample] = []
        self.dense: list[tuple[float, Vec3]] = [(0.0, self.state.position)]
        self.applied_desired: list[tuple[float, Vec3]] = []
        self.min_clearance = _clearance(self.state.position, self.scenario)
        self.max_speed = self.state.velocity.norm()
        self.collided = self.min_clearance < self.cfg.collision_radius

    # -- desired velocity ---------------------------------------------------

    def set_desired_override(self, v_u: Vec3 | None) -> None:
        """Pilot override of the scenario's desired-velocity source."""
        self._override = v_u

    def _desired_at(self, t: float) -> Vec3:
        if self._override is not None:
            return self._override
        return self.scenario.desired.value_at(t)

    # -- stepping -----------------------------------------------------------

    def _apply_yaw_policy(self, v_u_world: Vec3) -> None:
        if self.cfg.yaw_policy == "fixed":
            yaw = self.cfg.fixed_yaw
        else:  # face_desired: hold current heading when v_u has no heading
            if math.hypot(v_u_world.x, v_u_world.y) > 1e-6:
                yaw = math.atan2(v_u_world.y, v_u_world.x)
            else:
                yaw = self.state.yaw
        self.state = UavState(self.state.position, self.state.velocity, yaw, self.state.t)

    def _controller_tick(self) -> Sample:
        t = self.state.t
        v_u_world = self._desired_at(t)
        self._apply_yaw_policy(v_u_world)
        pose = Pose(self.state.position, self.state.yaw)

        if self.step_index % self._steps_per_radar == 0:
            self.latest_detections = tuple(
                radar.sense(self.rig, pose, self.scenario, t, self.rng, self.pa)
            )
        detections = self.latest_detections

        v_d_body = pose.dir_to_body(self.state.velocity)
        v_u_body = pose.dir_to_body(v_u_world)
        cmd, self.ctrl_state = avoid.step(
            self.ctrl_state, detections, v_d_body, v_u_body, self.params, t=t, pose=pose
        )
        v_out_world = pose.dir_to_world(cmd.v_out)
        self.v_cmd_world = v_out_world
        self.applied_desired.append((t, v_u_world))
        sample = Sample(t, self.state, v_u_world, v_out_world, cmd.mode, detections)
        self.samples.append(sample)
        return sample

    def advance(self) -> Sample | None:
        """One physics step; returns the Sample if a controller tick ran."""
        sample = None
        if self.step_index % self._steps_per_ctrl == 0:
            sample = self._controller_tick()
        self.state = step_dynamics(self.state, self.v_cmd_world, self.cfg)
        self.step_index += 1
        self.dense.append((self.state.t, self.state.position))
        clearance = _clearance(self.state.position, self.scenario)
        if clearance < self.min_clearance:
            self.min_clearance = clearance
        speed = self.state.velocity.norm()
        if speed > self.max_speed:
            self.max_speed = speed
        if clearance < self.cfg.collision_radius:
            self.collided = True
        return sample

    def build_log(self) -> RunLog:
        log = RunLog(
            scenario_name=self.scenario.name,
            seed=self.cfg.seed,
            cfg=self.cfg,
            samples=list(self.samples),
            dense=list(self.dense),
        )
        log.metrics = compute_metrics(log, self.scenario)
        return log


def run(
    scenario: Scenario,
    rig: radar.RadarRig | None = None,
    params: avoid.AvoidanceParams | None = None,
    cfg: SimConfig | None = None,
    pa: radar.PaModel | None = None,
) -> RunLog:
    """Batch-run a scenario to its duration (or first collision)."""
    engine = Engine(scenario, rig=rig, params=params, cfg=cfg, pa=pa)
    n_steps = round(scenario.duration_s / engine.cfg.physics_dt)
    for _ in range(n_steps):
        engine.advance()
        if engine.collided:
            break
    return engine.build_log()


def compute_metrics(log: RunLog, scenario: Scenario) -> Metrics:
    """Metrics from the dense trace against true conductor geometry."""
    if not log.samples:
        raise ValueError("cannot compute metrics of an empty log")
    min_clearance = math.inf
    for _, pos in log.dense:
        c = _clearance(pos, scenario)
        if c < min_clearance:
            min_clearance = c
    max_speed = max(s.state.velocity.norm() for s in log.samples)
    modes = frozenset(s.mode.value for s in log.samples)
    duration = log.dense[-1][0] if log.dense else log.samples[-1].t
    return Metrics(
        min_clearance=min_clearance,
        collided=min_clearance < log.cfg.collision_radius,
        max_speed=max_speed,
        modes_visited=modes,
        duration=duration,
    )


# -- logging formats (stable, golden-file tested) ----------------------------


def _vec_list(v: Vec3) -> list[float]:
    return [v.x, v.y, v.z]


def sample_to_json(sample: Sample) -> str:
    """One JSONL record per controller tick, fixed key order.

    Positions/velocities are world frame; detection points are body frame.
    """
    obj = {
        "t": sample.t,
        "pos": _vec_list(sample.state.position),
        "vel": _vec_list(sample.state.velocity),
        "v_u": _vec_list(sample.v_u),
        "v_out": _vec_list(sample.v_out),
        "mode": sample.mode.value,
        "detections": [
            {"sensor": d.sensor_id.value, "point": _vec_list(d.point)}
            for d in sample.detections
        ],
    }
    return json.dumps(obj, separators=(",", ":"))


def runlog_to_jsonl(log: RunLog) -> str:
    return "".join(sample_to_json(s) + "\n" for s in log.samples)


def write_runlog_jsonl(log: RunLog, path: str | Path) -> None:
    Path(path).write_text(runlog_to_jsonl(log))


METRICS_COLUMNS = (
    "scenario",
    "seed",
    "duration_s",
    "min_clearance_m",
    "collided",
    "max_speed_mps",
    "modes_visited",
)


def metrics_to_csv(log: RunLog) -> str:
    """Header plus one flat row; modes are sorted and semicolon-joined."""
    if log.metrics is None:
        raise ValueError("log has no metrics")
    m = log.metrics
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_COLUMNS)
    writer.writerow(
        [
            log.scenario_name,
            log.seed,
            f"{m.duration:.6f}",
            f"{m.min_clearance:.6f}",
            str(m.collided).lower(),
            f"{m.max_speed:.6f}",
            ";".join(sorted(m.modes_visited)),
        ]
    )
    return buf.getvalue()


def write_metrics_csv(log: RunLog, path: str | Path) -> None:
    Path(path).write_text(metrics_to_csv(log))


def check_assertions(log: RunLog, scenario: Scenario) -> list[str]:
    """Violations of the scenario's declared assertions (empty = pass)."""
    if log.metrics is None:
        raise ValueError("log has no metrics")
    violations = []
    if log.metrics.collided:
        violations.append(
            f"collided: clearance {log.metrics.min_clearance:.3f} m "
            f"< collision radius {log.cfg.collision_radius:.3f} m"
        )
    a = scenario.assertions
    if a is not None and a.min_clearance is not None:
        if log.metrics.min_clearance < a.min_clearance:
            violations.append(
                f"min_clearance {log.metrics.min_clearance:.3f} m "
                f"< required {a.min_clearance:.3f} m"
            )
    return violations


def is_pilot_driven(scenario: Scenario) -> bool:
    return isinstance(scenario.desired, ExternalDesired)
