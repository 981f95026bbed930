"""Characterization harness: turntable error/FoV study and yaw-sweep study.

Reproduces the rig's bench experiments against the simulated sensors: a
point reflector swept in a circle around the rig recovers range-error
statistics and effective fields of view per sensor; a slow in-place yaw
against a straight wire maps how the reported point walks away from the
closest point with incidence angle.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from .geom import Pose, Segment3, UnitVec3, Vec3, angle_between, closest_point_on_segment
from .radar import (
    PaModel,
    RadarRig,
    SensorId,
    SensorSpec,
    _axes,
    detect_conductor,
    detect_point_target,
)

PlaneName = Literal["XZ", "YZ", "XY"]
PLANES: tuple[PlaneName, ...] = ("XZ", "YZ", "XY")

# unit direction in the sweep plane at angle a, and the plane normal
_PLANE_FRAMES: dict[str, tuple[UnitVec3, UnitVec3, UnitVec3]] = {
    # (first axis, second axis, normal): target = cos(a)*first + sin(a)*second
    "XY": (UnitVec3(1, 0, 0), UnitVec3(0, 1, 0), UnitVec3(0, 0, 1)),
    "XZ": (UnitVec3(1, 0, 0), UnitVec3(0, 0, 1), UnitVec3(0, 1, 0)),
    "YZ": (UnitVec3(0, 1, 0), UnitVec3(0, 0, 1), UnitVec3(1, 0, 0)),
}


@dataclass(frozen=True)
class SweepSample:
    rig_angle: float  # rad, position of the target around the rig
    sensor_id: SensorId
    detection: Vec3  # body frame, noisy
    truth: Vec3  # body frame, exact target position

    def range_error(self) -> float:
        return self.detection.norm() - self.truth.norm()


@dataclass(frozen=True)
class SensorStats:
    sensor_id: SensorId
    mean_err: float
    sigma_err: float
    min_err: float
    max_err: float
    rmse: float
    n: int
    est_azimuth_fov: float | None = None  # deg
    est_elevation_fov: float | None = None  # deg


@dataclass(frozen=True)
class TurntableResult:
    plane: PlaneName
    steps: int
    stats: dict[SensorId, SensorStats]
    samples: list[SweepSample]


def _fov_arc_deg(detected_indices: list[int], steps: int) -> float | None:
    """Angular extent of the longest contiguous detection arc, degrees.

    The gate decides on the true target position, so on a circular sweep the
    detectable set is one contiguous arc; its extent is
    (samples spanned - 1) * step, circular wrap included.
    """
    if not detected_indices:
        return None
    n = len(detected_indices)
    if n == steps:
        return 360.0
    if n == 1:
        return 0.0  # a single sample spans no measurable arc
    idx = sorted(detected_indices)
    # the arc is the complement of the widest circular gap
    gaps = [(idx[(k + 1) % n] - idx[k]) % steps for k in range(n)]
    widest = max(gaps)
    span = steps - widest + 1
    return (span - 1) * (360.0 / steps)


def _fov_assignment(spec: SensorSpec, plane_normal: UnitVec3) -> str:
    """Which FoV angle a sweep in this plane measures for this sensor.

    The arc swept in a plane containing the boresight measures the azimuth
    FoV when the plane's normal is the sensor's own up axis (the sweep
    moves purely in sensor azimuth), and the elevation FoV otherwise.
    """
    _, _, z_s = _axes(spec)
    return "azimuth" if abs(z_s.dot(plane_normal)) > 0.99 else "elevation"


def turntable_experiment(
    rig: RadarRig,
    plane: PlaneName,
    target_range: float = 1.0,
    steps: int = 3600,
    rng: np.random.Generator | None = None,
) -> TurntableResult:
    """Sweep an ideal point reflector around the rig in a coordinate plane.

    Equivalent to rotating the rig on a turntable with the plane's normal
    vertical. Returns per-sensor range-error statistics and the estimated
    FoV angle that this plane's arc measures for each sensor.
    """
    if target_range <= 0.0:
        raise ValueError("target_range must be positive")
    if steps < 360:
        raise ValueError("need at least 360 steps for a meaningful sweep")
    if rng is None:
        rng = np.random.default_rng(0)
    first, second, normal = _PLANE_FRAMES[plane]
    streams = dict(zip((s.id for s in rig.sensors), rng.spawn(len(rig.sensors))))

    samples: list[SweepSample] = []
    detected: dict[SensorId, list[int]] = {s.id: [] for s in rig.sensors}
    errors: dict[SensorId, list[float]] = {s.id: [] for s in rig.sensors}
    for k in range(steps):
        angle = 2.0 * math.pi * k / steps
        truth = first * (target_range * math.cos(angle)) + second * (
            target_range * math.sin(angle)
        )
        for spec in rig.sensors:
            det = detect_point_target(spec, truth, streams[spec.id])
            if det is None:
                continue
            detected[spec.id].append(k)
            sample = SweepSample(angle, spec.id, det.point, truth)
            samples.append(sample)
            errors[spec.id].append(sample.range_error())

    stats: dict[SensorId, SensorStats] = {}
    for spec in rig.sensors:
        errs = np.array(errors[spec.id])
        est = _fov_arc_deg(detected[spec.id], steps)
        which = _fov_assignment(spec, normal)
        az_est = est if which == "azimuth" else None
        el_est = est if which == "elevation" else None
        if errs.size == 0:
            stats[spec.id] = SensorStats(spec.id, math.nan, math.nan, math.nan, math.nan, math.nan, 0, az_est, el_est)
            continue
        mean = float(errs.mean())
        sigma = float(errs.std(ddof=0))
        rmse = float(np.sqrt(np.mean(errs**2)))
        stats[spec.id] = SensorStats(
            spec.id, mean, sigma, float(errs.min()), float(errs.max()), rmse,
            int(errs.size), az_est, el_est,
        )
    return TurntableResult(plane, steps, stats, samples)


def stats_from_errors(errs: np.ndarray) -> tuple[float, float, float, float, float]:
    """(mean, sigma, min, max, rmse) of a 1-D error sample."""
    return (
        float(errs.mean()),
        float(errs.std(ddof=0)),
        float(errs.min()),
        float(errs.max()),
        float(np.sqrt(np.mean(errs**2))),
    )


def collect_range_errors(
    results: list[TurntableResult], per_sensor: int | None = None
) -> dict[SensorId, np.ndarray]:
    """Concatenate per-sensor range errors across planes.

    With per_sensor given, truncates each sensor to its first that-many
    errors so pooled statistics weight every sensor equally.
    """
    errors: dict[SensorId, list[float]] = {}
    for res in results:
        for s in res.samples:
            errors.setdefault(s.sensor_id, []).append(s.range_error())
    out = {}
    for sid, errs in errors.items():
        arr = np.array(errs)
        if per_sensor is not None:
            if arr.size < per_sensor:
                raise ValueError(
                    f"sensor {sid.value} produced {arr.size} samples, need {per_sensor}"
                )
            arr = arr[:per_sensor]
        out[sid] = arr
    return out


def yaw_sweep_experiment(
    rig: RadarRig,
    pa: PaModel,
    wire: Segment3,
    rng: np.random.Generator | None = None,
    steps: int = 720,
) -> list[tuple[float, float]]:
    """Map boresight-to-closest-point angle vs detected-to-closest angle.

    The rig yaws in place through a full revolution next to a fixed wire;
    every detection from every sensor contributes one (x, y) pair. Both
    angles open from the closest-point direction and are signed about the
    sensor-to-wire plane normal, so the curve's odd symmetry survives and
    all sensors collapse onto one relationship. Returns pairs sorted by x,
    degrees.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    pairs: list[tuple[float, float]] = []
    streams = dict(zip((s.id for s in rig.sensors), rng.spawn(len(rig.sensors))))
    for k in range(steps):
        yaw = 2.0 * math.pi * k / steps
        pose = Pose(Vec3(0.0, 0.0, 0.0), yaw)
        seg_body = Segment3(pose.point_to_body(wire.a), pose.point_to_body(wire.b))
        d = seg_body.direction()
        # Reference the same primitive the sensor model reports. A separate
        # infinite-line formula lands on the same point only to ~1e-13, which
        # would smear the plateau's exact zeros with representation dust.
        closest = closest_point_on_segment(Vec3(0.0, 0.0, 0.0), seg_body)
        if closest.norm() < 1e-9:
            continue
        normal = d.cross(closest).normalized()
        for spec in rig.sensors:
            det = detect_conductor(spec, pa, seg_body, streams[spec.id])
            if det is None:
                continue
            x = _planar_angle_deg(closest, spec.boresight, normal)
            y = _planar_angle_deg(closest, det.point, normal)
            pairs.append((x, y))
    pairs.sort()
    return pairs


def _planar_angle_deg(base: Vec3, v: Vec3, normal: UnitVec3) -> float:
    """Angle opened from base to v, signed by which side of base v falls on
    within the plane through base with the given normal."""
    ang = math.degrees(angle_between(base, v))
    side = base.cross(v).dot(normal)
    return ang if side >= 0.0 else -ang


# -- CSV outputs (column order fixed) ----------------------------------------

TURNTABLE_SAMPLE_COLUMNS = (
    "plane",
    "angle_deg",
    "sensor",
    "det_x",
    "det_y",
    "det_z",
    "truth_x",
    "truth_y",
    "truth_z",
    "range_error_m",
)

TURNTABLE_SUMMARY_COLUMNS = (
    "sensor",
    "mean_err_m",
    "sigma_err_m",
    "min_err_m",
    "max_err_m",
    "rmse_m",
    "n",
    "est_azimuth_fov_deg",
    "est_elevation_fov_deg",
)

YAWSWEEP_COLUMNS = ("boresight_offset_deg", "detected_vs_closest_deg")


def turntable_samples_csv(result: TurntableResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TURNTABLE_SAMPLE_COLUMNS)
    for s in result.samples:
        w.writerow(
            [
                result.plane,
                f"{math.degrees(s.rig_angle):.4f}",
                s.sensor_id.value,
                f"{s.detection.x:.6f}",
                f"{s.detection.y:.6f}",
                f"{s.detection.z:.6f}",
                f"{s.truth.x:.6f}",
                f"{s.truth.y:.6f}",
                f"{s.truth.z:.6f}",
                f"{s.range_error():.6f}",
            ]
        )
    return buf.getvalue()


def turntable_summary_csv(results: list[TurntableResult]) -> str:
    """One row per sensor; FoV estimates merged across the given planes."""
    rows: dict[SensorId, dict] = {}
    order: list[SensorId] = []
    for res in results:
        for sid, st in res.stats.items():
            if sid not in rows:
                rows[sid] = {"errs": [], "az": None, "el": None}
                order.append(sid)
            rows[sid]["errs"].extend(
                s.range_error() for s in res.samples if s.sensor_id == sid
            )
            if st.est_azimuth_fov is not None:
                rows[sid]["az"] = st.est_azimuth_fov
            if st.est_elevation_fov is not None:
                rows[sid]["el"] = st.est_elevation_fov
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TURNTABLE_SUMMARY_COLUMNS)
    for sid in order:
        errs = np.array(rows[sid]["errs"])
        if errs.size:
            mean, sigma, emin, emax, rmse = stats_from_errors(errs)
            vals = [f"{mean:.4f}", f"{sigma:.4f}", f"{emin:.4f}", f"{emax:.4f}", f"{rmse:.4f}"]
        else:
            vals = ["nan"] * 5
        az, el = rows[sid]["az"], rows[sid]["el"]
        w.writerow(
            [sid.value, *vals, errs.size,
             "" if az is None else f"{az:.1f}",
             "" if el is None else f"{el:.1f}"]
        )
    return buf.getvalue()


def yawsweep_csv(pairs: list[tuple[float, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(YAWSWEEP_COLUMNS)
    for x, y in pairs:
        w.writerow([f"{x:.4f}", f"{y:.4f}"])
    return buf.getvalue()


def write_text(path: str | Path, text: str) -> None:
    Path(path).write_text(text)
