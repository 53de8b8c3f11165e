"""Double-sphere fisheye camera model and the stereo rig description.

Projection and unprojection come in scalar form (``project`` /
``unproject``, one point, explicit validity flag) and batch form
(``project_batch`` / ``unproject_batch``) used by the rendering and
capture hot loops. With xi=0, alpha=0 both coincide exactly with the
pinhole model.

Pixel convention: integer coordinates are pixel centers; the optical
axis projects to (cx, cy). For field-of-view purposes the sensor extent
is the continuous range [0, width] x [0, height].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .geom import Pose


@dataclass(frozen=True)
class DoubleSphereIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    xi: float
    alpha: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must be in [0, 1)")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")

    @property
    def w2(self) -> float:
        """Validity-bound coefficient: a direction projects iff z > -w2*|p|."""
        a, xi = self.alpha, self.xi
        w1 = a / (1.0 - a) if a <= 0.5 else (1.0 - a) / a
        return (w1 + xi) / math.sqrt(2.0 * w1 * xi + xi * xi + 1.0)

    def scaled(self, factor: float) -> "DoubleSphereIntrinsics":
        """Same optics on a sensor scaled by ``factor`` in both axes."""
        return DoubleSphereIntrinsics(
            fx=self.fx * factor,
            fy=self.fy * factor,
            cx=self.cx * factor,
            cy=self.cy * factor,
            xi=self.xi,
            alpha=self.alpha,
            width=int(round(self.width * factor)),
            height=int(round(self.height * factor)),
        )

    def to_json(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "xi": self.xi,
            "alpha": self.alpha,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_json(cls, d: dict) -> "DoubleSphereIntrinsics":
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            xi=float(d["xi"]),
            alpha=float(d["alpha"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )


@dataclass(frozen=True)
class StereoRig:
    """Two cameras; ``t_l_r`` is the pose of the right camera in the left
    camera frame (points map right->left via t_l_r, left->right via its
    inverse)."""

    left: DoubleSphereIntrinsics
    right: DoubleSphereIntrinsics
    t_l_r: Pose

    @property
    def baseline(self) -> float:
        return float(np.linalg.norm(self.t_l_r.t))

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "left": self.left.to_json(),
            "right": self.right.to_json(),
            "t_l_r": self.t_l_r.to_json(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "StereoRig":
        return cls(
            left=DoubleSphereIntrinsics.from_json(d["left"]),
            right=DoubleSphereIntrinsics.from_json(d["right"]),
            t_l_r=Pose.from_json(d["t_l_r"]),
        )


def project(point, intr: DoubleSphereIntrinsics) -> tuple[np.ndarray, bool]:
    """Project one camera-frame point to a pixel. Returns (pixel, valid);
    the pixel is unspecified when valid is False."""
    p = np.asarray(point, dtype=float).reshape(3)
    x, y, z = p
    d1 = math.sqrt(x * x + y * y + z * z)
    if d1 < 1e-12:
        raise ValueError("degenerate point: cannot project the origin")
    if z <= -intr.w2 * d1:
        return np.zeros(2), False
    zeta = intr.xi * d1 + z
    d2 = math.sqrt(x * x + y * y + zeta * zeta)
    denom = intr.alpha * d2 + (1.0 - intr.alpha) * zeta
    if denom < 1e-12:
        return np.zeros(2), False
    u = intr.fx * x / denom + intr.cx
    v = intr.fy * y / denom + intr.cy
    return np.array([u, v]), True


def project_batch(points: np.ndarray, intr: DoubleSphereIntrinsics):
    """Vectorized projection of (..., 3) points. Returns (uv (..., 2), valid).

    Zero-length points come back invalid instead of raising; the scalar
    path owns that error."""
    p = np.asarray(points)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    r2 = x * x + y * y
    d1 = np.sqrt(r2 + z * z)
    zeta = intr.xi * d1 + z
    d2 = np.sqrt(r2 + zeta * zeta)
    denom = intr.alpha * d2 + (1.0 - intr.alpha) * zeta
    valid = (z > -intr.w2 * d1) & (denom > 1e-12) & (d1 > 1e-12)
    safe = np.where(denom > 1e-12, denom, 1.0)
    inv = 1.0 / safe
    uv = np.empty(p.shape[:-1] + (2,), dtype=p.dtype)
    uv[..., 0] = intr.fx * x * inv + intr.cx
    uv[..., 1] = intr.fy * y * inv + intr.cy
    return uv, valid


def unproject(pixel, intr: DoubleSphereIntrinsics) -> tuple[np.ndarray, bool]:
    """Back-project one pixel to a unit direction. Returns (dir, valid)."""
    u, v = np.asarray(pixel, dtype=float).reshape(2)
    mx = (u - intr.cx) / intr.fx
    my = (v - intr.cy) / intr.fy
    r2 = mx * mx + my * my
    a, xi = intr.alpha, intr.xi
    if a > 0.5 and r2 > 1.0 / (2.0 * a - 1.0):
        return np.array([0.0, 0.0, 1.0]), False
    under = 1.0 - (2.0 * a - 1.0) * r2
    mz = (1.0 - a * a * r2) / (a * math.sqrt(max(under, 0.0)) + 1.0 - a)
    k = (mz * xi + math.sqrt(mz * mz + (1.0 - xi * xi) * r2)) / (mz * mz + r2)
    d = np.array([k * mx, k * my, k * mz - xi])
    return d / np.linalg.norm(d), True


def unproject_batch(pixels: np.ndarray, intr: DoubleSphereIntrinsics):
    """Vectorized back-projection of (..., 2) pixels to unit directions."""
    px = np.asarray(pixels)
    mx = (px[..., 0] - intr.cx) / intr.fx
    my = (px[..., 1] - intr.cy) / intr.fy
    r2 = mx * mx + my * my
    a, xi = intr.alpha, intr.xi
    if a > 0.5:
        valid = r2 <= 1.0 / (2.0 * a - 1.0)
    else:
        valid = np.ones(r2.shape, dtype=bool)
    under = np.maximum(1.0 - (2.0 * a - 1.0) * r2, 0.0)
    mz = (1.0 - a * a * r2) / (a * np.sqrt(under) + 1.0 - a)
    k = (mz * xi + np.sqrt(mz * mz + (1.0 - xi * xi) * r2)) / (mz * mz + r2)
    d = np.empty(px.shape[:-1] + (3,), dtype=px.dtype)
    d[..., 0] = k * mx
    d[..., 1] = k * my
    d[..., 2] = k * mz - xi
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    return d, valid


def _max_angle(intr: DoubleSphereIntrinsics, sx: float) -> float:
    """Largest boresight angle whose direction (sx*sin, 0, cos) still
    projects inside the sensor extent, found by bisection."""

    def inside(theta: float) -> bool:
        d = np.array([sx * math.sin(theta), 0.0, math.cos(theta)])
        uv, ok = project(d, intr)
        return bool(ok) and 0.0 <= uv[0] <= intr.width and 0.0 <= uv[1] <= intr.height

    lo, hi = 0.0, math.pi
    if inside(hi - 1e-9):
        return hi
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if inside(mid):
            lo = mid
        else:
            hi = mid
    return lo


def fov_check(intr: DoubleSphereIntrinsics) -> float:
    """Horizontal field of view (radians): angular span of directions in
    the x-z plane that project validly inside the sensor."""
    return _max_angle(intr, +1.0) + _max_angle(intr, -1.0)


def load_rig(path) -> StereoRig:
    with open(path) as f:
        return StereoRig.from_json(json.load(f))


def default_rig() -> StereoRig:
    """The checked-in simulated rig (>180 deg horizontal FoV, 64 mm baseline)."""
    data = resources.files("spheroview.data").joinpath("default_rig.json").read_text()
    return StereoRig.from_json(json.loads(data))
