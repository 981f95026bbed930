"""Avoidance controller: tangents, braking, rejection, line fit, arbitration."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srd.avoid import (
    AvoidanceParams,
    AvoidanceState,
    BUFFER_WINDOW_S,
    MIN_FIT_POINTS,
    Mode,
    braking_horizon,
    combine_output,
    ebrake_check,
    estimate_line_direction,
    filter_avoidance_sphere,
    params_from_scenario,
    proximity_rejection,
    step,
    tangent_for_detection,
)
from srd.geom import Pose, UnitVec3, Vec3
from srd.radar import Detection, SensorId
from srd import world

UP = UnitVec3(0.0, 0.0, 1.0)
P = AvoidanceParams()


def det(x: float, y: float, z: float, t: float = 0.0, sensor: SensorId = SensorId.FRONT) -> Detection:
    return Detection(point=Vec3(x, y, z), sensor_id=sensor, t=t)


finite = st.floats(-20.0, 20.0, allow_nan=False)
vec = st.builds(Vec3, finite, finite, finite)


# -- tangent direction (single detection) -------------------------------------------


def test_tangent_hand_value():
    t = tangent_for_detection(Vec3(5.0, 0.0, 0.0), Vec3(10.0, 0.0, 1.0), UP)
    # up is already orthogonal to p_hat; scale is the closing cosine 10/sqrt(101)
    assert t == Vec3(0.0, 0.0, 0.9950371902099892)


def test_tangent_none_when_receding_or_orthogonal():
    assert tangent_for_detection(Vec3(5.0, 0.0, 0.0), Vec3(-1.0, 0.0, 0.0), UP) is None
    assert tangent_for_detection(Vec3(5.0, 0.0, 0.0), Vec3(0.0, 1.0, 0.0), UP) is None
    assert tangent_for_detection(Vec3(5.0, 0.0, 0.0), Vec3(0.0, 0.0, 0.0), UP) is None


def test_tangent_vertical_detection_falls_back_to_horizontal():
    t = tangent_for_detection(Vec3(0.0, 0.0, 3.0), Vec3(1.0, 0.0, 1.0), UP)
    assert t == Vec3(0.7071067811865475, 0.0, 0.0)


def test_tangent_sign_follows_velocity():
    # descending flight prefers the downward tangent
    t = tangent_for_detection(Vec3(5.0, 0.0, 0.0), Vec3(10.0, 0.0, -1.0), UP)
    assert t.z < 0.0


def test_tangent_zero_range_raises():
    with pytest.raises(ValueError):
        tangent_for_detection(Vec3(0.0, 0.0, 0.0), Vec3(1.0, 0.0, 0.0), UP)


@given(vec, vec)
def test_tangent_orthogonal_to_detection_and_agrees_with_velocity(p, v):
    if p.norm() < 1e-3 or v.norm() < 1e-3:
        return
    t = tangent_for_detection(p, v, UP)
    if t is None:
        return
    assert abs(t.dot(p) / p.norm()) < 1e-9
    assert t.dot(v) > -1e-9
    assert t.norm() <= 1.0 + 1e-12  # never exceeds the closing cosine bound


@given(vec, vec, st.floats(0.01, 100.0))
def test_tangent_invariant_under_velocity_rescaling(p, v, k):
    if p.norm() < 1e-3 or v.norm() < 1e-3:
        return
    if abs(p.dot(v)) < 1e-9 * p.norm() * v.norm():
        return  # closing sign is fp-marginal; the gate may flip under rescale
    p_hat = p / p.norm()
    t_raw = UP - p_hat * UP.dot(p_hat)
    if t_raw.norm() > 1e-9 and abs(t_raw.dot(v)) < 1e-6 * t_raw.norm() * v.norm():
        return  # sign-pick tie (v parallel to p): direction is fp-marginal
    a = tangent_for_detection(p, v, UP)
    b = tangent_for_detection(p, v * k, UP)
    if a is None:
        assert b is None
    else:
        assert b is not None and a.is_close(b, tol=1e-9)


def test_tangent_identity_two_forms():
    # component-of-up form equals the double cross product form
    rng = np.random.default_rng(0)
    for _ in range(300):
        p = Vec3(*rng.uniform(-5, 5, 3))
        if p.norm() < 1e-3:
            continue
        p_hat = p / p.norm()
        lhs = UP - p_hat * UP.dot(p_hat)
        rhs = p_hat.cross(UP).cross(p_hat)
        assert lhs.is_close(rhs, tol=1e-12)


# -- combining and clamping -----------------------------------------------------------


def test_combine_clamps_to_desired_speed():
    out = combine_output([Vec3(0.0, 0.0, 3.0)], Vec3(4.0, 0.0, 0.0))
    assert out.is_close(Vec3(3.2, 0.0, 2.4), tol=1e-12)
    assert out.norm() <= 4.0 + 1e-12


def test_combine_passthrough_is_same_object():
    v_u = Vec3(2.0, 1.0, 0.0)
    assert combine_output([], v_u) is v_u


def test_combine_exact_cancellation_gives_zero():
    assert combine_output([Vec3(-1.0, 0.0, 0.0)], Vec3(1.0, 0.0, 0.0)) == Vec3(0.0, 0.0, 0.0)


def test_combine_no_clamp_when_within_budget():
    # a retarding tangent keeps the sum under the budget: no rescale at all
    out = combine_output([Vec3(-1.0, 0.0, 0.0)], Vec3(3.0, 0.0, 4.0))
    assert out == Vec3(2.0, 0.0, 4.0)


@given(st.lists(vec, max_size=5), vec)
def test_combine_never_exceeds_desired_magnitude(tangents, v_u):
    out = combine_output(tangents, v_u)
    assert out.norm() <= v_u.norm() + 1e-9


# -- braking horizon and e-brake gate ---------------------------------------------------


def test_braking_horizon_hand_value():
    assert braking_horizon(Vec3(10.0, 0.0, 0.0), P) == 12.0


def test_ebrake_head_on_within_horizon():
    assert ebrake_check([det(11.0, 0.0, 0.0)], Vec3(10.0, 0.0, 0.0), P)


def test_ebrake_ignores_outside_cone():
    # alpha = atan(0.25) ~ 14 deg; a return 20 deg off the velocity is safe
    a = math.radians(20.0)
    d = det(11.0 * math.cos(a), 11.0 * math.sin(a), 0.0)
    assert not ebrake_check([d], Vec3(10.0, 0.0, 0.0), P)


def test_ebrake_needs_speed_strictly_above_threshold():
    assert not ebrake_check([det(1.0, 0.0, 0.0)], Vec3(P.v_eb, 0.0, 0.0), P)
    assert ebrake_check([det(1.0, 0.0, 0.0)], Vec3(P.v_eb + 1e-6, 0.0, 0.0), P)


def test_ebrake_range_gate_is_strict():
    v = Vec3(10.0, 0.0, 0.0)
    l_h = braking_horizon(v, P)
    assert not ebrake_check([det(l_h, 0.0, 0.0)], v, P)
    assert ebrake_check([det(l_h - 1e-6, 0.0, 0.0)], v, P)


@given(st.floats(2.1, 14.0), st.floats(2.1, 14.0), st.floats(0.5, 25.0))
def test_ebrake_monotone_in_speed(s1, s2, r):
    # a hazard that trips the brake at some speed trips it at any higher speed
    lo, hi = sorted((s1, s2))
    d = [det(r, 0.0, 0.0)]
    if ebrake_check(d, Vec3(lo, 0.0, 0.0), P):
        assert ebrake_check(d, Vec3(hi, 0.0, 0.0), P)


# -- proximity rejection -----------------------------------------------------------------


def test_rejection_hand_value():
    out = proximity_rejection([det(1.0, 0.0, 0.0)], P)
    # k_s (r - r_s) p_hat = 2 * (1 - 1.5) * x_hat
    assert out == Vec3(-1.0, 0.0, 0.0)


def test_rejection_boundary_is_outside():
    assert proximity_rejection([det(P.r_s, 0.0, 0.0)], P) is None
    assert proximity_rejection([], P) is None


def test_rejection_picks_closest():
    out = proximity_rejection([det(1.4, 0.0, 0.0), det(0.0, 0.5, 0.0)], P)
    assert out.is_close(Vec3(0.0, -2.0, 0.0), tol=1e-12)


@given(st.floats(0.01, 1.49), st.floats(0.0, 2 * math.pi))
def test_rejection_points_away_and_grows_with_intrusion(r, ang):
    p = Vec3(r * math.cos(ang), r * math.sin(ang), 0.0)
    out = proximity_rejection([Detection(point=p, sensor_id=SensorId.TOP, t=0.0)], P)
    assert out.dot(p) < 0.0
    assert math.isclose(out.norm(), P.k_s * (P.r_s - r), rel_tol=1e-9)


def test_filter_avoidance_sphere_strict():
    inside = det(5.9, 0.0, 0.0)
    boundary = det(P.r_a, 0.0, 0.0)
    assert filter_avoidance_sphere([inside, boundary], P.r_a) == [inside]


# -- line direction estimate ---------------------------------------------------------------


def _line_points(direction: Vec3, n: int = 12, span: float = 3.0, noise: float = 0.0, seed: int = 0):
    d = direction.normalized()
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        s = -span / 2 + span * i / (n - 1)
        p = Vec3(d.x * s, d.y * s, d.z * s)
        if noise:
            p = p + Vec3(*rng.normal(0.0, noise, 3))
        out.append(Detection(point=p, sensor_id=SensorId.FRONT, t=0.0))
    return out


def test_line_fit_recovers_direction_against_svd_oracle():
    rng = np.random.default_rng(7)
    for _ in range(50):
        d = Vec3(*rng.uniform(-1, 1, 3))
        if d.norm() < 0.3:
            continue
        buf = _line_points(d, n=20, span=4.0, noise=0.02, seed=int(rng.integers(1 << 31)))
        got = estimate_line_direction(buf)
        pts = np.array([[q.point.x, q.point.y, q.point.z] for q in buf])
        centered = pts - pts.mean(axis=0)
        oracle = np.linalg.svd(centered, full_matrices=False)[2][0]
        cosang = abs(float(np.dot([got.x, got.y, got.z], oracle)))
        assert cosang > 1.0 - 1e-6


def test_line_fit_needs_enough_points():
    buf = _line_points(Vec3(0.0, 1.0, 0.0), n=MIN_FIT_POINTS - 1)
    assert estimate_line_direction(buf) is None
    assert estimate_line_direction([]) is None


def test_line_fit_needs_spread():
    buf = _line_points(Vec3(0.0, 1.0, 0.0), n=10, span=0.3)
    assert estimate_line_direction(buf) is None


def test_line_fit_rejects_cluster_mixture():
    # two tight clusters from parallel wires: centers are collinear, but the
    # span is one big void, so the fit must refuse rather than report the
    # across-wire direction
    a = _line_points(Vec3(1.0, 0.0, 0.0), n=6, span=0.2, noise=0.01, seed=1)
    b = [
        Detection(point=q.point + Vec3(0.0, 5.0, 0.0), sensor_id=q.sensor_id, t=q.t)
        for q in _line_points(Vec3(1.0, 0.0, 0.0), n=6, span=0.2, noise=0.01, seed=2)
    ]
    assert estimate_line_direction(a + b) is None
    # a genuinely filled span of the same extent is accepted
    dense = _line_points(Vec3(0.0, 1.0, 0.0), n=24, span=5.0, noise=0.01, seed=3)
    assert estimate_line_direction(dense) is not None


def test_line_fit_sign_normalized():
    got = estimate_line_direction(_line_points(Vec3(-1.0, 0.0, 0.0)))
    assert got.x > 0.0
    got = estimate_line_direction(_line_points(Vec3(0.0, 0.0, -1.0)))
    assert got.z > 0.0


# -- step arbitration -------------------------------------------------------------------


def test_step_cruise_passthrough():
    v_u = Vec3(3.0, 0.0, 0.0)
    cmd, state = step(AvoidanceState(), [], Vec3(3.0, 0.0, 0.0), v_u, P)
    assert cmd.mode is Mode.CRUISE
    assert cmd.v_out is v_u
    assert state.mode is Mode.CRUISE


def test_step_rejection_preempts_everything():
    # intruder inside r_s while also inside the brake cone: rejection wins
    cmd, _ = step(AvoidanceState(), [det(1.0, 0.0, 0.0)], Vec3(10.0, 0.0, 0.0), Vec3(10.0, 0.0, 0.0), P)
    assert cmd.mode is Mode.REJECTING
    assert cmd.v_out == Vec3(-1.0, 0.0, 0.0)
    assert cmd.contributing_detections == (SensorId.FRONT,)


def test_step_ebrake_zeroes_output():
    cmd, state = step(AvoidanceState(), [det(5.0, 0.0, 0.0)], Vec3(10.0, 0.0, 0.0), Vec3(10.0, 0.0, 0.0), P)
    assert cmd.mode is Mode.EBRAKING
    assert cmd.v_out == Vec3(0.0, 0.0, 0.0)


def test_step_ebrake_latches_while_fast():
    latched = AvoidanceState(mode=Mode.EBRAKING)
    # hazard has left the cone but the platform is still fast: keep braking
    cmd, _ = step(latched, [], Vec3(5.0, 0.0, 0.0), Vec3(5.0, 0.0, 0.0), P)
    assert cmd.mode is Mode.EBRAKING
    assert cmd.v_out == Vec3(0.0, 0.0, 0.0)


def test_step_ebrake_releases_when_slow():
    latched = AvoidanceState(mode=Mode.EBRAKING)
    v = Vec3(P.v_eb, 0.0, 0.0)  # at threshold: strict > fails, latch opens
    cmd, _ = step(latched, [], v, Vec3(5.0, 0.0, 0.0), P)
    assert cmd.mode is Mode.CRUISE


def test_step_tangential_below_ebrake_speed():
    v = Vec3(1.0, 0.0, 0.0)
    cmd, _ = step(AvoidanceState(), [det(3.0, 0.0, 0.0)], v, v, P)
    assert cmd.mode is Mode.TANGENTIAL
    assert cmd.v_out.z > 0.0  # lifted over the wire
    assert cmd.v_out.norm() <= v.norm() + 1e-9
    assert cmd.contributing_detections == (SensorId.FRONT,)


def test_step_detection_outside_avoidance_sphere_ignored():
    v = Vec3(1.0, 0.0, 0.0)
    cmd, _ = step(AvoidanceState(), [det(6.5, 0.0, 0.0)], v, v, P)
    assert cmd.mode is Mode.CRUISE
    assert cmd.v_out is v


def test_step_is_pure_and_deterministic():
    state = AvoidanceState()
    args = ([det(3.0, 0.0, 0.0), det(0.5, 0.5, 0.0)], Vec3(1.0, 0.0, 0.0), Vec3(1.0, 0.0, 0.0), P)
    a_cmd, a_state = step(state, *args)
    b_cmd, b_state = step(state, *args)
    assert a_cmd == b_cmd
    assert a_state == b_state
    assert state.detection_buffer == ()  # input state untouched


def test_step_buffer_window_and_world_anchoring():
    state = AvoidanceState()
    pose0 = Pose(Vec3(0.0, 0.0, 0.0), 0.0)
    cmd, state = step(state, [det(3.0, 0.0, 0.0, t=0.0)], Vec3(0.0, 0.0, 0.0), Vec3(0.0, 0.0, 0.0), P, t=0.0, pose=pose0)
    assert [d.point for d in state.detection_buffer] == [Vec3(3.0, 0.0, 0.0)]
    # platform moved 1 m forward: same wire now 2 m ahead in body frame,
    # but the buffered copy must stay at world x=3
    pose1 = Pose(Vec3(1.0, 0.0, 0.0), 0.0)
    cmd, state = step(state, [det(2.0, 0.0, 0.0, t=0.1)], Vec3(0.0, 0.0, 0.0), Vec3(0.0, 0.0, 0.0), P, t=0.1, pose=pose1)
    assert [d.point for d in state.detection_buffer] == [Vec3(3.0, 0.0, 0.0), Vec3(3.0, 0.0, 0.0)]
    # after the window passes, the old entries are dropped
    cmd, state = step(state, [], Vec3(0.0, 0.0, 0.0), Vec3(0.0, 0.0, 0.0), P, t=0.1 + BUFFER_WINDOW_S + 0.01, pose=pose1)
    assert state.detection_buffer == ()


def test_step_line_estimate_feeds_projection_plane():
    # feed a wire along world Y over two ticks; c_hat should be +Y and the
    # body-frame projection plane should rotate with the vehicle's yaw
    state = AvoidanceState()
    v0 = Vec3(0.0, 0.0, 0.0)
    dets_t0 = [det(3.0, -1.5 + 0.5 * i, 0.0, t=0.0) for i in range(7)]
    _, state = step(state, dets_t0, v0, v0, P, t=0.0, pose=Pose(Vec3(0.0, 0.0, 0.0), 0.0))
    assert state.c_hat is not None
    assert state.c_hat.is_close(Vec3(0.0, 1.0, 0.0), tol=1e-6)
    yaw = math.pi / 4
    _, state = step(state, [], v0, v0, P, t=0.05, pose=Pose(Vec3(0.0, 0.0, 0.0), yaw))
    # world +Y expressed in a 45 deg yawed body frame
    assert state.k_p is not None
    expected = Vec3(math.sin(yaw), math.cos(yaw), 0.0)
    normal = Vec3(state.k_p.normal.x, state.k_p.normal.y, state.k_p.normal.z)
    assert min((normal - expected).norm(), (normal + expected).norm()) < 1e-6


def test_step_projection_removes_along_wire_component():
    # with the wire direction known, motion along the wire must not trip
    # the tangential response: detections project onto the UAV's own plane
    state = AvoidanceState()
    v0 = Vec3(0.0, 0.0, 0.0)
    dets_t0 = [det(3.0, -1.5 + 0.5 * i, 0.0, t=0.0) for i in range(7)]
    _, state = step(state, dets_t0, v0, v0, P, t=0.0, pose=IDENT)
    v_along = Vec3(0.0, 2.0, 0.0)  # flying parallel to the wire
    cmd, _ = step(state, [det(3.0, 0.5, 0.0, t=0.1)], v_along, v_along, P, t=0.1, pose=IDENT)
    assert cmd.mode is Mode.CRUISE
    assert cmd.v_out is v_along


IDENT = Pose(Vec3(0.0, 0.0, 0.0), 0.0)


# -- params -----------------------------------------------------------------------------


def test_params_validation():
    with pytest.raises(ValueError):
        AvoidanceParams(r_s=6.0, r_a=6.0)
    with pytest.raises(ValueError):
        AvoidanceParams(alpha=math.pi / 2)
    with pytest.raises(ValueError):
        AvoidanceParams(k_s=0.0)


def test_params_from_scenario_maps_alpha_and_gravity():
    text = """
name = "p"
duration_s = 1.0
gravity_down = [0.0, 0.0, -2.0]

[uav]
start = [0.0, 0.0, 10.0]

[uav.desired]
kind = "constant"
velocity = [0.0, 0.0, 0.0]

[avoidance]
r_a = 8.0
alpha_deg = 10.0
"""
    params = params_from_scenario(world.load_scenario(text))
    assert params.r_a == 8.0
    assert math.isclose(params.alpha, math.radians(10.0))
    assert params.gravity_down.is_close(Vec3(0.0, 0.0, -1.0))
    assert params.up().is_close(Vec3(0.0, 0.0, 1.0))


def test_default_alpha_matches_quarter_slope():
    assert P.alpha == math.atan(0.25)


def test_mode_values_are_wire_format():
    assert [m.value for m in Mode] == ["cruise", "tangential", "ebraking", "rejecting"]
