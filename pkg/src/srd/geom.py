"""Frame-agnostic 3D geometry primitives.

Everything downstream (sensing, avoidance, simulation) is written against
these types. Vectors are immutable; all operations return new values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator

UNIT_TOL = 1e-9
_DEGENERATE_SEGMENT = 1e-6


@dataclass(frozen=True, slots=True)
class Vec3:
    """Cartesian 3-vector. Meters for positions, m/s for velocities."""

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError(f"vector components must be finite, got ({self.x}, {self.y}, {self.z})")

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __neg__(self) -> "Vec3":
        return Vec3(-self.x, -self.y, -self.z)

    def __mul__(self, k: float) -> "Vec3":
        return Vec3(self.x * k, self.y * k, self.z * k)

    __rmul__ = __mul__

    def __truediv__(self, k: float) -> "Vec3":
        return Vec3(self.x / k, self.y / k, self.z / k)

    def __iter__(self) -> Iterator[float]:
        yield self.x
        yield self.y
        yield self.z

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def cross(self, other: "Vec3") -> "Vec3":
        return Vec3(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def norm_sq(self) -> float:
        return self.dot(self)

    def normalized(self) -> "UnitVec3":
        n = self.norm()
        if n < _DEGENERATE_SEGMENT:
            raise ValueError("cannot normalize a near-zero vector")
        return UnitVec3(self.x / n, self.y / n, self.z / n)

    def is_close(self, other: "Vec3", tol: float = 1e-9) -> bool:
        return (self - other).norm() <= tol

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)

    @classmethod
    def from_iter(cls, it: Iterable[float]) -> "Vec3":
        vals = [float(v) for v in it]
        if len(vals) != 3:
            raise ValueError(f"expected 3 components, got {len(vals)}")
        return cls(*vals)


ZERO = Vec3(0.0, 0.0, 0.0)


@dataclass(frozen=True, slots=True)
class UnitVec3(Vec3):
    """A Vec3 whose norm is 1 within UNIT_TOL. Construction enforces it."""

    def __post_init__(self) -> None:
        # dataclass(slots=True) rebuilds the class, so zero-arg super() breaks
        Vec3.__post_init__(self)
        n = math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)
        if abs(n - 1.0) > UNIT_TOL:
            raise ValueError(f"unit vector norm must be 1 within {UNIT_TOL}, got {n!r}")


X_AXIS = UnitVec3(1.0, 0.0, 0.0)
Y_AXIS = UnitVec3(0.0, 1.0, 0.0)
Z_AXIS = UnitVec3(0.0, 0.0, 1.0)


@dataclass(frozen=True, slots=True)
class Segment3:
    """Finite line segment from a to b. Degenerate (length <= 1e-6) rejected."""

    a: Vec3
    b: Vec3

    def __post_init__(self) -> None:
        if (self.b - self.a).norm() <= _DEGENERATE_SEGMENT:
            raise ValueError("segment endpoints are coincident")

    def direction(self) -> UnitVec3:
        return (self.b - self.a).normalized()

    def length(self) -> float:
        return (self.b - self.a).norm()


@dataclass(frozen=True, slots=True)
class Plane:
    """Plane through `point` with unit `normal`."""

    normal: UnitVec3
    point: Vec3


@dataclass(frozen=True, slots=True)
class Pose:
    """Rigid body pose restricted to yaw (level-flight assumption).

    World <-> body transforms: body +X forward, +Y left, +Z up; yaw is the
    right-handed rotation of body +X about world +Z.
    """

    position: Vec3
    yaw: float

    def point_to_body(self, p_world: Vec3) -> Vec3:
        return rotate_z(p_world - self.position, -self.yaw)

    def point_to_world(self, p_body: Vec3) -> Vec3:
        return self.position + rotate_z(p_body, self.yaw)

    def dir_to_body(self, v_world: Vec3) -> Vec3:
        return rotate_z(v_world, -self.yaw)

    def dir_to_world(self, v_body: Vec3) -> Vec3:
        return rotate_z(v_body, self.yaw)


IDENTITY_POSE = Pose(ZERO, 0.0)


def rotate_z(v: Vec3, angle: float) -> Vec3:
    """Rotate v right-handed about +Z by angle (radians)."""
    c, s = math.cos(angle), math.sin(angle)
    return Vec3(c * v.x - s * v.y, s * v.x + c * v.y, v.z)


def closest_point_on_segment(query: Vec3, seg: Segment3) -> Vec3:
    """Closest point on the finite segment to `query` (endpoint clamped)."""
    ab = seg.b - seg.a
    t = (query - seg.a).dot(ab) / ab.norm_sq()
    t = min(1.0, max(0.0, t))
    return seg.a + ab * t


def closest_point_on_line(query: Vec3, point: Vec3, direction: UnitVec3) -> Vec3:
    """Closest point to `query` on the infinite line through `point`."""
    return point + direction * (query - point).dot(direction)


def project_onto_plane(v: Vec3, plane: Plane) -> Vec3:
    """Orthogonal projection of the vector v onto the plane's orientation."""
    return v - plane.normal * v.dot(plane.normal)


def angle_between(a: Vec3, b: Vec3) -> float:
    """Unsigned angle in [0, pi] between two nonzero vectors.

    atan2 of cross/dot: numerically stable near 0 and pi, unlike acos.
    """
    if a.norm() < _DEGENERATE_SEGMENT or b.norm() < _DEGENERATE_SEGMENT:
        raise ValueError("angle_between requires nonzero vectors")
    return math.atan2(a.cross(b).norm(), a.dot(b))


def signed_angle(a: Vec3, b: Vec3, axis: UnitVec3) -> float:
    """Signed angle from a to b about `axis`, in (-pi, pi]."""
    if a.norm() < _DEGENERATE_SEGMENT or b.norm() < _DEGENERATE_SEGMENT:
        raise ValueError("signed_angle requires nonzero vectors")
    return math.atan2(a.cross(b).dot(axis), a.dot(b))


def clamp_magnitude(v: Vec3, max_norm: float) -> Vec3:
    """v unchanged if ||v|| <= max_norm, else rescaled to max_norm."""
    n = v.norm()
    if n <= max_norm:
        return v
    return v * (max_norm / n)


def orthonormalize(v: Vec3, against: UnitVec3) -> UnitVec3:
    """Component of v orthogonal to `against`, normalized.

    Raises if v is (near) parallel to `against`.
    """
    residual = v - against * v.dot(against)
    return residual.normalized()
