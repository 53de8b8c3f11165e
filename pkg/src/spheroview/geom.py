"""SE(3) pose algebra: quaternion poses, interpolation, twist exp/log.

Conventions used throughout the package:

- Quaternions are stored (w, x, y, z), unit-norm, with the sign
  canonicalized so that w >= 0 (ties broken on the first nonzero
  component) to make comparisons deterministic.
- Translations are meters; angles are radians. Degrees appear only at
  CLI / UI boundaries.
- ``compose(a, b)`` is the homogeneous-matrix product a @ b: b is applied
  first, a second.
- A twist is a 6-vector (wx, wy, wz, vx, vy, vz): rotation part first
  (axis-angle, radians), translation part second (meters).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_EPS = 1e-12


def _canonical(q: np.ndarray) -> np.ndarray:
    n2 = float(q @ q)
    if n2 < _EPS:
        raise ValueError("zero-norm quaternion")
    # skip the division when already unit so construction is idempotent
    # (decode/encode round trips stay byte-exact)
    if abs(n2 - 1.0) > 1e-12:
        q = q / math.sqrt(n2)
    for c in q:
        if c < 0.0:
            return -q
        if c > 0.0:
            return q
    return q


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(m: np.ndarray) -> np.ndarray:
    t = m[0, 0] + m[1, 1] + m[2, 2]
    if t > 0.0:
        s = math.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] >= m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    return _canonical(q)


def quat_slerp(a: np.ndarray, b: np.ndarray, s: float) -> np.ndarray:
    dot = float(a @ b)
    if dot < 0.0:
        b = -b
        dot = -dot
    if dot > 1.0 - 1e-12:
        return _canonical(a + s * (b - a))
    theta = math.acos(min(dot, 1.0))
    sin_t = math.sin(theta)
    return _canonical(
        (math.sin((1.0 - s) * theta) / sin_t) * a + (math.sin(s * theta) / sin_t) * b
    )


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform: unit quaternion (w,x,y,z) + translation (m)."""

    q: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.q, other.q) and np.array_equal(self.t, other.t)

    def __hash__(self):
        return hash((tuple(self.q), tuple(self.t)))

    def __post_init__(self):
        q = _canonical(np.asarray(self.q, dtype=float))
        t = np.asarray(self.t, dtype=float).reshape(3).copy()
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "t", t)
        self.q.setflags(write=False)
        self.t.setflags(write=False)

    @property
    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or a batch (..., 3)."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation_matrix.T + self.t

    def to_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation_matrix
        m[:3, 3] = self.t
        return m

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=float)
        return cls(quat_from_matrix(m[:3, :3]), m[:3, 3])

    @classmethod
    def from_axis_angle(cls, axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "Pose":
        ax = np.asarray(axis, dtype=float)
        ax = ax / np.linalg.norm(ax)
        h = 0.5 * angle
        q = np.array([math.cos(h), *(math.sin(h) * ax)])
        return cls(q, np.asarray(translation, dtype=float))

    def rotation_angle(self) -> float:
        """Magnitude of the rotation, radians in [0, pi]."""
        return 2.0 * math.atan2(float(np.linalg.norm(self.q[1:])), abs(float(self.q[0])))

    def to_json(self) -> dict:
        return {"q": [float(v) for v in self.q], "t": [float(v) for v in self.t]}

    @classmethod
    def from_json(cls, d: dict) -> "Pose":
        return cls(np.asarray(d["q"], dtype=float), np.asarray(d["t"], dtype=float))


IDENTITY = Pose()


def compose(a: Pose, b: Pose) -> Pose:
    """a after b (homogeneous product a @ b)."""
    return Pose(quat_mul(a.q, b.q), a.t + quat_to_matrix(a.q) @ b.t)


def inverse(p: Pose) -> Pose:
    qc = np.array([p.q[0], -p.q[1], -p.q[2], -p.q[3]])
    return Pose(qc, -(quat_to_matrix(qc) @ p.t))


def interpolate(a: Pose, b: Pose, s: float) -> Pose:
    """Linear translation blend + shortest-arc slerp; s in [0, 1]."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"interpolation parameter out of [0,1]: {s}")
    return Pose(quat_slerp(a.q, b.q, s), (1.0 - s) * a.t + s * b.t)


def _so3_exp(w: np.ndarray) -> np.ndarray:
    angle = float(np.linalg.norm(w))
    k = _skew(w)
    k2 = k @ k
    if angle < 1e-8:
        return np.eye(3) + k + 0.5 * k2
    s, c = math.sin(angle), math.cos(angle)
    return np.eye(3) + (s / angle) * k + ((1.0 - c) / angle**2) * k2


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def _so3_left_jacobian(w: np.ndarray) -> np.ndarray:
    angle = float(np.linalg.norm(w))
    k = _skew(w)
    k2 = k @ k
    if angle < 1e-8:
        return np.eye(3) + 0.5 * k + (1.0 / 6.0) * k2
    a2 = angle * angle
    return (
        np.eye(3)
        + ((1.0 - math.cos(angle)) / a2) * k
        + ((angle - math.sin(angle)) / (a2 * angle)) * k2
    )


def _so3_left_jacobian_inv(w: np.ndarray) -> np.ndarray:
    angle = float(np.linalg.norm(w))
    k = _skew(w)
    k2 = k @ k
    if angle < 1e-8:
        return np.eye(3) - 0.5 * k + (1.0 / 12.0) * k2
    half = 0.5 * angle
    coeff = (1.0 - half * math.cos(half) / math.sin(half)) / (angle * angle)
    return np.eye(3) - 0.5 * k + coeff * k2


def exp(twist: np.ndarray) -> Pose:
    """SE(3) exponential of a twist (wx,wy,wz, vx,vy,vz)."""
    xi = np.asarray(twist, dtype=float).reshape(6)
    w, v = xi[:3], xi[3:]
    r = _so3_exp(w)
    t = _so3_left_jacobian(w) @ v
    return Pose(quat_from_matrix(r), t)


def log(p: Pose) -> np.ndarray:
    """Inverse of :func:`exp`; defined for rotation angle < pi."""
    angle = p.rotation_angle()
    if angle > math.pi - 1e-6:
        raise ValueError("parameterization singularity: rotation angle at pi")
    if angle < 1e-10:
        w = 2.0 * p.q[1:] * (1.0 if p.q[0] >= 0 else -1.0)
    else:
        axis = p.q[1:] / np.linalg.norm(p.q[1:])
        w = axis * angle
    v = _so3_left_jacobian_inv(w) @ p.t
    return np.concatenate([w, v])


def distance(a: Pose, b: Pose) -> tuple[float, float]:
    """(translation distance m, rotation angle rad) between two poses."""
    d = compose(inverse(a), b)
    return float(np.linalg.norm(b.t - a.t)), d.rotation_angle()
