"""Three-scenario wire-avoidance controller.

Maps (current detections, UAV velocity v_d, user desired velocity v_u) to a
corrected output velocity. Arbitration per tick, highest priority first:

  1. rejection:  any detection inside the safety sphere r_s pushes the UAV
                 directly away from it,
  2. e-brake:    moving faster than v_eb with a detection inside the braking
                 cone (length from the stopping distance plus margin,
                 half-angle alpha) commands a full stop, latched until the
                 UAV is slow again,
  3. tangential: every approaching detection inside the avoidance sphere
                 r_a contributes a gravity-referenced tangent; their sum
                 deflects v_u without ever exceeding its magnitude.

All vectors are body-frame. When enough buffered detections line up, the
wire direction c_hat is estimated and scenario geometry is projected into
the plane perpendicular to it, which stops the controller from fighting
motion parallel to the wires.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .geom import (
    IDENTITY_POSE,
    Plane,
    Pose,
    UnitVec3,
    Vec3,
    project_onto_plane,
)
from .radar import Detection, SensorId

DEFAULT_ALPHA_RAD = math.atan(0.25)

BUFFER_WINDOW_S = 1.0
MIN_FIT_POINTS = 6
MIN_FIT_SPREAD_M = 0.5
MAX_FIT_GAP_FRACTION = 0.45
# below this sin(angle to vertical) the gravity-referenced tangent direction
# is numerically meaningless and the horizontal fallback takes over
_DEGENERATE_SIN = math.sin(math.radians(0.5))
_EPS = 1e-12


class Mode(str, Enum):
    CRUISE = "cruise"
    TANGENTIAL = "tangential"
    EBRAKING = "ebraking"
    REJECTING = "rejecting"


@dataclass(frozen=True)
class AvoidanceParams:
    r_a: float = 6.0  # avoidance sphere radius, m
    r_s: float = 1.5  # safety sphere radius, m
    k_s: float = 2.0  # rejection gain, 1/s
    a_max: float = 5.0  # braking acceleration assumed by the horizon, m/s^2
    s_margin: float = 2.0  # extra stopping margin, m
    v_eb: float = 2.0  # e-brake speed threshold, m/s
    alpha: float = DEFAULT_ALPHA_RAD  # braking cone half-angle, rad
    gravity_down: UnitVec3 = UnitVec3(0.0, 0.0, -1.0)

    def __post_init__(self) -> None:
        if not (0.0 < self.r_s < self.r_a):
            raise ValueError("require 0 < r_s < r_a")
        if self.k_s <= 0.0 or self.a_max <= 0.0 or self.v_eb <= 0.0:
            raise ValueError("k_s, a_max and v_eb must be positive")
        if self.s_margin < 0.0:
            raise ValueError("s_margin must be nonnegative")
        if not (0.0 < self.alpha < math.pi / 2.0):
            raise ValueError("alpha must be in (0, pi/2)")

    def up(self) -> UnitVec3:
        return UnitVec3(-self.gravity_down.x, -self.gravity_down.y, -self.gravity_down.z)


def params_from_scenario(scenario) -> AvoidanceParams:
    """AvoidanceParams from a scenario's [avoidance] table and gravity."""
    kwargs: dict = {"gravity_down": scenario.gravity_down}
    for key, value in scenario.avoidance:
        if key == "alpha_deg":
            kwargs["alpha"] = math.radians(value)
        else:
            kwargs[key] = value
    return AvoidanceParams(**kwargs)


@dataclass(frozen=True)
class AvoidanceState:
    """Controller memory between ticks.

    detection_buffer holds world-anchored copies of recent detections (so
    UAV translation cannot smear the line fit); c_hat is the world-frame
    wire direction estimate; k_p is that estimate expressed as the
    body-frame projection plane of the latest tick.
    """

    mode: Mode = Mode.CRUISE
    detection_buffer: tuple[Detection, ...] = ()
    c_hat: UnitVec3 | None = None
    k_p: Plane | None = None


@dataclass(frozen=True)
class VelocityCommand:
    v_out: Vec3
    mode: Mode
    contributing_detections: tuple[SensorId, ...] = ()


def filter_avoidance_sphere(detections: Iterable[Detection], r_a: float) -> list[Detection]:
    """Detections strictly inside the avoidance sphere."""
    return [d for d in detections if d.point.norm() < r_a]


def tangent_for_detection(p_i: Vec3, v: Vec3, g_n_hat: UnitVec3) -> Vec3 | None:
    """Scaled avoidance tangent for one detection, or None if not closing.

    None when v is zero or the detection direction has no positive
    component along v (strictly receding or orthogonal). Otherwise the
    tangent is the component of up orthogonal to p_hat, sign-picked to
    agree with v, scaled by the closing cosine. Detections within 0.5 deg
    of vertical fall back to the horizontal unit vector orthogonal to
    p_hat that maximizes alignment with v.
    """
    r = p_i.norm()
    if r < _EPS:
        raise ValueError("detection at zero range has no direction")
    vn = v.norm()
    if vn < _EPS:
        return None
    p_hat = p_i / r
    closing = p_hat.dot(v) / vn
    if closing <= 0.0:
        return None

    t_raw = g_n_hat - p_hat * g_n_hat.dot(p_hat)  # == (p_hat x g_n) x p_hat
    n = t_raw.norm()
    if n >= _DEGENERATE_SIN:
        t_hat = t_raw / n
        if t_hat.dot(v) < 0.0:
            t_hat = -t_hat
        return t_hat * closing

    # near-vertical detection: horizontal direction orthogonal to p_hat
    u = g_n_hat.cross(p_hat)
    un = u.norm()
    if un > _EPS:
        t_hat = u / un
        if t_hat.dot(v) < 0.0:
            t_hat = -t_hat
        return t_hat * closing
    # p_hat exactly vertical: any horizontal direction is orthogonal
    horiz = v - g_n_hat * g_n_hat.dot(v)
    hn = horiz.norm()
    if hn > _EPS:
        return (horiz / hn) * closing
    # v vertical too: all horizontals tie; pick a fixed one
    ref = Vec3(1.0, 0.0, 0.0)
    side = ref - g_n_hat * g_n_hat.dot(ref)
    if side.norm() < _EPS:
        side = Vec3(0.0, 1.0, 0.0) - g_n_hat * g_n_hat.dot(Vec3(0.0, 1.0, 0.0))
    return side.normalized() * closing


def combine_output(tangents: Sequence[Vec3], v_u: Vec3) -> Vec3:
    """Sum of tangents added to v_u, clamped to the magnitude of v_u.

    With no tangents the desired velocity passes through unmodified (the
    identical object, not a recomputed copy).
    """
    if not tangents:
        return v_u
    raw = v_u
    for t in tangents:
        raw = raw + t
    n = raw.norm()
    if n < _EPS:
        return Vec3(0.0, 0.0, 0.0)
    limit = v_u.norm()
    if n <= limit:
        return raw
    return raw * (limit / n)


def braking_horizon(v_d: Vec3, params: AvoidanceParams) -> float:
    """Stopping distance at a_max plus the safety margin, meters."""
    return v_d.norm_sq() / (2.0 * params.a_max) + params.s_margin


def _ebrake_hits(
    detections: Iterable[Detection], v_d: Vec3, params: AvoidanceParams
) -> list[Detection]:
    """Detections inside the braking cone (range and angle gates)."""
    vn = v_d.norm()
    if vn < _EPS:
        return []
    l_h = braking_horizon(v_d, params)
    hits = []
    for d in detections:
        p = d.point
        if p.norm() >= l_h:
            continue
        if params.alpha > math.atan2(v_d.cross(p).norm(), v_d.dot(p)):
            hits.append(d)
    return hits


def ebrake_check(detections: Iterable[Detection], v_d: Vec3, params: AvoidanceParams) -> bool:
    """True iff moving faster than v_eb with a detection in the brake cone."""
    if v_d.norm() <= params.v_eb:
        return False
    return bool(_ebrake_hits(detections, v_d, params))


def proximity_rejection(
    detections: Iterable[Detection], params: AvoidanceParams
) -> Vec3 | None:
    """Rejection velocity away from the closest detection inside r_s."""
    closest = _closest_in_safety_sphere(detections, params)
    if closest is None:
        return None
    p = closest.point
    r = p.norm()
    return (p / r) * (params.k_s * (r - params.r_s))


def _closest_in_safety_sphere(
    detections: Iterable[Detection], params: AvoidanceParams
) -> Detection | None:
    best = None
    best_r = params.r_s
    for d in detections:
        r = d.point.norm()
        # zero-range returns carry no direction to reject along
        if _EPS < r < best_r:
            best, best_r = d, r
    return best


def estimate_line_direction(
    buffer: Sequence[Detection],
    min_points: int = MIN_FIT_POINTS,
    min_spread: float = MIN_FIT_SPREAD_M,
    max_gap_fraction: float = MAX_FIT_GAP_FRACTION,
) -> UnitVec3 | None:
    """Principal direction of buffered detection points, if trustworthy.

    Requires at least min_points points spanning at least min_spread along
    the principal axis, with no dominant void in the span. The gap test
    matters: a buffer mixing several parallel wires forms tight clusters
    whose centers are themselves collinear, so a plain principal-component
    fit would confidently return the direction ACROSS the wires instead of
    along them. Genuine along-wire spreads fill their span densely; cluster
    mixtures concentrate it into jumps. Sign-normalized to nonnegative X,
    then Y, then Z.
    """
    if len(buffer) < min_points:
        return None
    pts = np.array([[d.point.x, d.point.y, d.point.z] for d in buffer], dtype=float)
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered
    _, eigvecs = np.linalg.eigh(cov)  # ascending eigenvalues
    axis = eigvecs[:, -1]
    spans = np.sort(centered @ axis)
    span = spans[-1] - spans[0]
    if span < min_spread:
        return None
    if np.diff(spans).max() > max_gap_fraction * span:
        return None
    x, y, z = (float(c) for c in axis)
    flip = x < -_EPS or (abs(x) <= _EPS and (y < -_EPS or (abs(y) <= _EPS and z < 0.0)))
    if flip:
        x, y, z = -x, -y, -z
    return Vec3(x, y, z).normalized()


def _prune_buffer(
    buffer: tuple[Detection, ...], detections: Sequence[Detection], pose: Pose, now: float
) -> tuple[Detection, ...]:
    """Append this tick's detections (world-anchored) and drop stale ones."""
    fresh = tuple(replace(d, point=pose.point_to_world(d.point)) for d in detections)
    merged = buffer + fresh
    cutoff = now - BUFFER_WINDOW_S
    return tuple(d for d in merged if d.t >= cutoff - 1e-9)


def step(
    state: AvoidanceState,
    detections: Sequence[Detection],
    v_d: Vec3,
    v_u: Vec3,
    params: AvoidanceParams,
    *,
    t: float | None = None,
    pose: Pose | None = None,
) -> tuple[VelocityCommand, AvoidanceState]:
    """One controller tick. Pure: returns the command and the next state.

    v_d is the UAV's current velocity, v_u the desired velocity, both body
    frame. `t` and `pose` anchor the detection buffer in the world frame so
    the line fit sees wire geometry instead of ego-motion; omitting them
    (stationary callers) degrades gracefully to body-frame buffering.
    """
    if pose is None:
        pose = IDENTITY_POSE
    if t is None:
        t = max((d.t for d in detections), default=0.0)
        if state.detection_buffer:
            t = max(t, state.detection_buffer[-1].t)

    buffer = _prune_buffer(state.detection_buffer, detections, pose, t)

    # line-direction estimate refreshes every tick regardless of mode
    c_world = estimate_line_direction(buffer)
    k_p = None
    if c_world is not None:
        c_body = pose.dir_to_body(c_world).normalized()
        k_p = Plane(normal=c_body, point=Vec3(0.0, 0.0, 0.0))

    def wrap(cmd: VelocityCommand) -> tuple[VelocityCommand, AvoidanceState]:
        return cmd, AvoidanceState(
            mode=cmd.mode, detection_buffer=buffer, c_hat=c_world, k_p=k_p
        )

    # 1. safety sphere: reject straight away from the closest intruder
    closest = _closest_in_safety_sphere(detections, params)
    if closest is not None:
        v_out = proximity_rejection(detections, params)
        assert v_out is not None
        return wrap(VelocityCommand(v_out, Mode.REJECTING, (closest.sensor_id,)))

    # 2. e-brake, latched while still moving faster than v_eb
    latched = state.mode is Mode.EBRAKING and v_d.norm() > params.v_eb
    hits = _ebrake_hits(detections, v_d, params) if v_d.norm() > params.v_eb else []
    if latched or hits:
        contributing = tuple(d.sensor_id for d in hits)
        return wrap(VelocityCommand(Vec3(0.0, 0.0, 0.0), Mode.EBRAKING, contributing))

    # 3. tangential corrections in the wire-normal plane when known
    if k_p is not None:
        candidates = [replace(d, point=project_onto_plane(d.point, k_p)) for d in detections]
        v_d_eff = project_onto_plane(v_d, k_p)
        v_u_eff = project_onto_plane(v_u, k_p)
    else:
        candidates = list(detections)
        v_d_eff, v_u_eff = v_d, v_u

    up = params.up()
    tangents: list[Vec3] = []
    contributing: list[SensorId] = []
    for det in filter_avoidance_sphere(candidates, params.r_a):
        if det.point.norm() < _EPS:
            continue  # projected onto the UAV itself: no usable direction
        got = False
        for v in (v_d_eff, v_u_eff):
            tangent = tangent_for_detection(det.point, v, up)
            if tangent is not None:
                tangents.append(tangent)
                got = True
        if got:
            contributing.append(det.sensor_id)

    v_out = combine_output(tangents, v_u)
    mode = Mode.TANGENTIAL if tangents else Mode.CRUISE
    return wrap(VelocityCommand(v_out, mode, tuple(contributing)))
