"""Six-sensor mmWave rig model: mounting, fields of view, wire detection.

Body frame: +X forward, +Y left, +Z up, sensors co-located at the origin
(the rig is small against every range of interest). Each sensor has a
rectangular field of view in its own azimuth/elevation frame:

    x_s = boresight
    z_s = up_reference orthonormalized against the boresight
    y_s = z_s cross x_s
    az  = atan2(u . y_s, u . x_s)
    el  = atan2(u . z_s, hypot(u . x_s, u . y_s))

A point is visible iff |az| <= az_fov/2 and |el| <= el_fov/2 (inclusive)
and range <= max_range. The up_reference encodes how the device is rolled
on its mount: the front long-range device is rolled 90 degrees so its wide
azimuth axis sweeps vertically; side and rear devices keep azimuth
horizontal; top and bottom align their azimuth sweep with the body X axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache

import numpy as np

from .geom import (
    ZERO,
    Pose,
    Segment3,
    UnitVec3,
    Vec3,
    closest_point_on_segment,
    orthonormalize,
)
from .world import Scenario

RATE_HZ_DEFAULT = 10.0
ANGULAR_SIGMA_DEG_DEFAULT = 1.0


class SensorId(str, Enum):
    FRONT = "front"
    REAR = "rear"
    LEFT = "left"
    RIGHT = "right"
    TOP = "top"
    BOTTOM = "bottom"


@dataclass(frozen=True)
class FovPair:
    """Field-of-view extents in degrees, device convention."""

    elevation_deg: float
    azimuth_deg: float


# Factory characterization of the build this model reproduces. Range error
# statistics are meters (signed error, measured minus true at 1 m); FoVs in
# degrees. The long-range front device over-delivers slightly; the five
# wide devices come in well under their datasheet azimuth.
MEASURED_RANGE_ERROR: dict[SensorId, tuple[float, float, float, float, float]] = {
    # (mean, sigma, min, max, rmse)
    SensorId.TOP: (0.0603, 0.0173, 0.0262, 0.0907, 0.0628),
    SensorId.BOTTOM: (0.0810, 0.0116, 0.0510, 0.0940, 0.0819),
    SensorId.LEFT: (0.0326, 0.0186, -0.0004, 0.0593, 0.0375),
    SensorId.RIGHT: (0.0426, 0.0106, 0.0145, 0.0704, 0.0439),
    SensorId.REAR: (0.0627, 0.0233, 0.0079, 0.1116, 0.0669),
    SensorId.FRONT: (0.0785, 0.0318, 0.0340, 0.1136, 0.0847),
}
OVERALL_RANGE_ERROR = (0.0607, 0.0279, -0.0004, 0.1136, 0.0663)

DATASHEET_FOV_DEG: dict[SensorId, FovPair] = {
    SensorId.TOP: FovPair(120.0, 120.0),
    SensorId.BOTTOM: FovPair(120.0, 120.0),
    SensorId.LEFT: FovPair(120.0, 120.0),
    SensorId.RIGHT: FovPair(120.0, 120.0),
    SensorId.REAR: FovPair(120.0, 120.0),
    SensorId.FRONT: FovPair(30.0, 120.0),
}

MEASURED_FOV_DEG: dict[SensorId, FovPair] = {
    SensorId.TOP: FovPair(108.0, 76.0),
    SensorId.BOTTOM: FovPair(106.0, 76.0),
    SensorId.LEFT: FovPair(104.0, 75.0),
    SensorId.RIGHT: FovPair(104.0, 75.0),
    SensorId.REAR: FovPair(135.0, 75.0),
    SensorId.FRONT: FovPair(41.0, 122.0),
}

MAX_RANGE_M: dict[SensorId, float] = {
    SensorId.TOP: 7.0,
    SensorId.BOTTOM: 7.0,
    SensorId.LEFT: 7.0,
    SensorId.RIGHT: 7.0,
    SensorId.REAR: 7.0,
    SensorId.FRONT: 10.0,
}

_SIDE_ANGLE = math.radians(75.0)

_BORESIGHTS: dict[SensorId, UnitVec3] = {
    SensorId.FRONT: UnitVec3(1.0, 0.0, 0.0),
    SensorId.REAR: UnitVec3(-1.0, 0.0, 0.0),
    SensorId.LEFT: Vec3(math.cos(_SIDE_ANGLE), math.sin(_SIDE_ANGLE), 0.0).normalized(),
    SensorId.RIGHT: Vec3(math.cos(_SIDE_ANGLE), -math.sin(_SIDE_ANGLE), 0.0).normalized(),
    SensorId.TOP: UnitVec3(0.0, 0.0, 1.0),
    SensorId.BOTTOM: UnitVec3(0.0, 0.0, -1.0),
}

_UP_REFERENCES: dict[SensorId, UnitVec3] = {
    SensorId.FRONT: UnitVec3(0.0, 1.0, 0.0),  # device rolled 90 deg on its mount
    SensorId.REAR: UnitVec3(0.0, 0.0, 1.0),
    SensorId.LEFT: UnitVec3(0.0, 0.0, 1.0),
    SensorId.RIGHT: UnitVec3(0.0, 0.0, 1.0),
    SensorId.TOP: UnitVec3(1.0, 0.0, 0.0),
    SensorId.BOTTOM: UnitVec3(1.0, 0.0, 0.0),
}

SENSOR_ORDER = (
    SensorId.FRONT,
    SensorId.REAR,
    SensorId.LEFT,
    SensorId.RIGHT,
    SensorId.TOP,
    SensorId.BOTTOM,
)


@dataclass(frozen=True)
class SensorSpec:
    id: SensorId
    boresight: UnitVec3
    up_reference: UnitVec3
    azimuth_fov_deg: float
    elevation_fov_deg: float
    max_range_m: float
    bias_mean_m: float
    noise_sigma_m: float
    angular_sigma_deg: float = ANGULAR_SIGMA_DEG_DEFAULT
    rate_hz: float = RATE_HZ_DEFAULT

    def __post_init__(self) -> None:
        if not (0.0 < self.azimuth_fov_deg <= 180.0 and 0.0 < self.elevation_fov_deg <= 180.0):
            raise ValueError("fields of view must be in (0, 180] degrees")
        if self.max_range_m <= 0.0:
            raise ValueError("max_range_m must be positive")
        if self.noise_sigma_m < 0.0 or self.angular_sigma_deg < 0.0:
            raise ValueError("noise magnitudes must be nonnegative")
        if self.rate_hz <= 0.0:
            raise ValueError("rate_hz must be positive")
        if abs(self.boresight.dot(self.up_reference)) > 1.0 - 1e-9:
            raise ValueError("up_reference must not be parallel to the boresight")


@lru_cache(maxsize=128)
def _axes(spec: SensorSpec) -> tuple[UnitVec3, UnitVec3, UnitVec3]:
    """Sensor frame (x_s, y_s, z_s): boresight, left-of-boresight, up."""
    x_s = spec.boresight
    z_s = orthonormalize(spec.up_reference, x_s)
    y_s = z_s.cross(x_s).normalized()
    return x_s, y_s, z_s


@dataclass(frozen=True)
class RadarRig:
    sensors: tuple[SensorSpec, ...]

    def __post_init__(self) -> None:
        ids = [s.id for s in self.sensors]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate sensor ids in rig")

    def by_id(self, sensor_id: SensorId) -> SensorSpec:
        for s in self.sensors:
            if s.id == sensor_id:
                return s
        raise KeyError(sensor_id)


@dataclass(frozen=True)
class Detection:
    """One radar return: point in body frame at measurement time t."""

    point: Vec3
    sensor_id: SensorId
    t: float


@dataclass(frozen=True)
class PaModel:
    """Angular walk of wire returns away from the closest point.

    Within theta0 of perpendicular incidence the sensor reports the closest
    point on the wire. Beyond that, the reported point slides along the
    wire toward the boresight intersection: offset angle grows as
    blend_slope * (theta - theta0), capped so the report never passes the
    boresight's closest approach to the wire.
    """

    theta0_deg: float = 30.0
    blend_slope: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.theta0_deg <= 90.0):
            raise ValueError("theta0_deg must be in [0, 90]")
        if self.blend_slope < 0.0:
            raise ValueError("blend_slope must be nonnegative")


DEFAULT_PA = PaModel()


def default_rig(use_measured_fov: bool = False) -> RadarRig:
    """The stock six-sensor rig, datasheet FoVs unless asked for measured."""
    fovs = MEASURED_FOV_DEG if use_measured_fov else DATASHEET_FOV_DEG
    sensors = []
    for sid in SENSOR_ORDER:
        mean, sigma, _, _, _ = MEASURED_RANGE_ERROR[sid]
        sensors.append(
            SensorSpec(
                id=sid,
                boresight=_BORESIGHTS[sid],
                up_reference=_UP_REFERENCES[sid],
                azimuth_fov_deg=fovs[sid].azimuth_deg,
                elevation_fov_deg=fovs[sid].elevation_deg,
                max_range_m=MAX_RANGE_M[sid],
                bias_mean_m=mean,
                noise_sigma_m=sigma,
            )
        )
    return RadarRig(tuple(sensors))


def rig_from_scenario(scenario: Scenario) -> RadarRig:
    """Default rig with any scenario-file overrides applied."""
    overrides = scenario.rig
    rig = default_rig(use_measured_fov=overrides.use_measured_fov if overrides else False)
    if overrides is None or not overrides.sensors:
        return rig
    by_id = {s.id: s for s in rig.sensors}
    for ov in overrides.sensors:
        sid = SensorId(ov.sensor_id)
        by_id[sid] = replace(by_id[sid], **dict(ov.values))
    return RadarRig(tuple(by_id[s.id] for s in rig.sensors))


def sensor_angles(spec: SensorSpec, p_body: Vec3) -> tuple[float, float, float]:
    """(azimuth, elevation, range) of a body-frame point, radians/meters."""
    x_s, y_s, z_s = _axes(spec)
    ux, uy, uz = p_body.dot(x_s), p_body.dot(y_s), p_body.dot(z_s)
    rng = math.sqrt(ux * ux + uy * uy + uz * uz)
    az = math.atan2(uy, ux)
    el = math.atan2(uz, math.hypot(ux, uy))
    return az, el, rng


def in_fov(spec: SensorSpec, p_body: Vec3, max_range_m: float | None = None) -> bool:
    """Visibility gate, inclusive at the FoV and range boundaries."""
    az, el, rng = sensor_angles(spec, p_body)
    if rng <= 0.0:
        return False
    limit = spec.max_range_m if max_range_m is None else max_range_m
    return (
        rng <= limit
        and abs(az) <= math.radians(spec.azimuth_fov_deg) / 2.0
        and abs(el) <= math.radians(spec.elevation_fov_deg) / 2.0
    )


def _ideal_wire_return(spec: SensorSpec, pa: PaModel, seg_body: Segment3) -> Vec3 | None:
    """Noise-free reported point for a wire segment, before the FoV gate."""
    d = seg_body.direction()
    a = seg_body.a
    c = a - d * a.dot(d)  # closest point to the sensor on the infinite line
    r = c.norm()
    if r < 1e-9:
        return None  # wire passes through the sensor: no usable geometry
    b = spec.boresight
    theta = math.atan2(c.cross(b).norm(), c.dot(b))
    theta0 = math.radians(pa.theta0_deg)
    if theta > theta0:
        # Closest approach of the boresight ray to the wire line, as the
        # signed wire parameter s_b measured from c. c is perpendicular to
        # d, which collapses the general two-line solution to this form.
        bd = b.dot(d)
        denom = 1.0 - bd * bd
        cap = math.inf
        side = 0.0
        if denom > 1e-12:
            s_b = bd * b.dot(c) / denom
            k = b.dot(c) / denom
            if k >= 0.0:  # intersection in front of the sensor
                cap = abs(s_b)
                side = math.copysign(1.0, s_b) if s_b != 0.0 else 0.0
        if side != 0.0:
            walk = math.tan(min(pa.blend_slope * (theta - theta0), math.radians(89.0)))
            ideal = c + d * (side * min(r * walk, cap))
            return closest_point_on_segment(ideal, seg_body)
    # plateau: report the closest point on the span itself, bit-exactly
    return closest_point_on_segment(ZERO, seg_body)


def _apply_noise(spec: SensorSpec, ideal: Vec3, rng: np.random.Generator) -> Vec3:
    """Measurement noise: radial N(bias, sigma) along the ray, then angular
    jitter N(0, angular_sigma) about a random axis orthogonal to the ray.
    The noisy range survives the jitter exactly. Exactly three rng draws,
    fixed order; with both offsets exactly zero the ideal point passes
    through untouched (bit-exact zero-noise behavior).
    """
    dr = rng.normal(spec.bias_mean_m, spec.noise_sigma_m)
    axis_angle = rng.uniform(0.0, 2.0 * math.pi)
    jitter = rng.normal(0.0, math.radians(spec.angular_sigma_deg))
    if dr == 0.0 and jitter == 0.0:
        return ideal

    r_true = ideal.norm()
    u = ideal / r_true
    # orthonormal pair spanning the plane normal to the ray
    ref = Vec3(1.0, 0.0, 0.0) if abs(u.x) < 0.9 else Vec3(0.0, 1.0, 0.0)
    e1 = ref.cross(u).normalized()
    e2 = u.cross(e1)
    w = e1 * math.cos(axis_angle) + e2 * math.sin(axis_angle)
    # Rodrigues with w orthogonal to u
    u_noisy = u * math.cos(jitter) + w.cross(u) * math.sin(jitter)
    r_noisy = max(r_true + dr, 1e-6)
    return u_noisy * r_noisy


def detect_conductor(
    spec: SensorSpec,
    pa: PaModel,
    seg_body: Segment3,
    rng: np.random.Generator,
    *,
    detectability: float = 1.0,
    t: float = 0.0,
) -> Detection | None:
    """Simulate one sensor's return from one wire, or None if not visible.

    Detectability scales effective range. Noise: a signed radial error
    N(bias, sigma) along the ray, then an angular jitter N(0, angular_sigma)
    about a random direction orthogonal to the ray; the noisy range is
    preserved exactly through the jitter. Exactly three rng draws per
    emitted detection, in a fixed order.
    """
    ideal = _ideal_wire_return(spec, pa, seg_body)
    if ideal is None:
        return None
    if not in_fov(spec, ideal, max_range_m=spec.max_range_m * detectability):
        return None

    point = _apply_noise(spec, ideal, rng)
    return Detection(point=point, sensor_id=spec.id, t=t)


def sense(
    rig: RadarRig,
    pose: Pose,
    scenario: Scenario,
    t: float,
    rng: np.random.Generator,
    pa: PaModel = DEFAULT_PA,
) -> list[Detection]:
    """One synchronized sweep of every sensor against every conductor.

    Detections come back in (rig order, conductor order). Each sensor gets
    its own child rng stream so one sensor's draw count cannot shift
    another's, keeping runs reproducible under FoV or world edits.
    """
    segs_body = [
        (
            Segment3(pose.point_to_body(c.geometry.a), pose.point_to_body(c.geometry.b)),
            c.detectability,
        )
        for c in scenario.conductors
    ]
    detections: list[Detection] = []
    streams = rng.spawn(len(rig.sensors))
    for spec, stream in zip(rig.sensors, streams):
        for seg_body, detectability in segs_body:
            det = detect_conductor(spec, pa, seg_body, stream, detectability=detectability, t=t)
            if det is not None:
                detections.append(det)
    return detections


def detect_point_target(
    spec: SensorSpec,
    target_body: Vec3,
    rng: np.random.Generator,
    *,
    t: float = 0.0,
) -> Detection | None:
    """Return from an ideal point reflector (no wire geometry, no walk).

    Same gate and noise chain as detect_conductor; used by the turntable
    characterization harness.
    """
    if not in_fov(spec, target_body):
        return None
    point = _apply_noise(spec, target_body, rng)
    return Detection(point=point, sensor_id=spec.id, t=t)


def visible_sensors(rig: RadarRig, p_body: Vec3) -> list[SensorId]:
    """Which sensors can see a body-frame point right now."""
    return [s.id for s in rig.sensors if in_fov(s, p_body)]
