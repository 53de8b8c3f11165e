"""Synthetic scene description and fisheye capture.

Stands in for the physical cameras: every sensor pixel is unprojected
through the double-sphere model and ray-cast against a small set of
primitives (textured/checkered quads and point targets). Point targets
are defined by angular size, so they stay measurable at any distance;
their occlusion depth is the distance to the point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import camera as cam
from .camera import DoubleSphereIntrinsics
from .geom import Pose, inverse

SKY = (24, 32, 48)
VIGNETTE = (0, 0, 0)

_MIN_DIST = 0.05
_MAX_DIST = 100.0


@dataclass(frozen=True)
class Quad:
    """Flat rectangle; local z is the normal, extents are size/2 in x/y."""

    pose: Pose
    size: tuple[float, float]
    color: tuple[int, int, int] = (200, 200, 200)
    checker: float | None = None  # cell edge, meters
    color2: tuple[int, int, int] = (40, 40, 40)

    def to_json(self) -> dict:
        d = {
            "type": "quad",
            "pose": self.pose.to_json(),
            "size": list(self.size),
            "color": list(self.color),
        }
        if self.checker is not None:
            d["checker"] = self.checker
            d["color2"] = list(self.color2)
        return d


@dataclass(frozen=True)
class PointTarget:
    """A dot of fixed angular size as seen from any viewpoint."""

    position: np.ndarray
    color: tuple[int, int, int] = (255, 255, 255)
    angular_size: float = math.radians(1.0)

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))

    def to_json(self) -> dict:
        return {
            "type": "point",
            "position": [float(v) for v in self.position],
            "color": list(self.color),
            "angular_size_deg": math.degrees(self.angular_size),
        }


@dataclass(frozen=True)
class Scene:
    quads: tuple[Quad, ...] = ()
    points: tuple[PointTarget, ...] = ()
    sky: tuple[int, int, int] = SKY

    def __post_init__(self):
        for q in self.quads:
            self._check_distance(np.linalg.norm(q.pose.t))
        for p in self.points:
            self._check_distance(np.linalg.norm(p.position))

    @staticmethod
    def _check_distance(d: float):
        if not _MIN_DIST < d < _MAX_DIST:
            raise ValueError(
                f"primitive distance {d:.3f} m outside ({_MIN_DIST}, {_MAX_DIST})"
            )

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "sky": list(self.sky),
            "primitives": [q.to_json() for q in self.quads] + [p.to_json() for p in self.points],
        }

    @classmethod
    def from_json(cls, d: dict) -> "Scene":
        quads, points = [], []
        for prim in d.get("primitives", []):
            if prim["type"] == "quad":
                quads.append(
                    Quad(
                        pose=Pose.from_json(prim["pose"]),
                        size=tuple(prim["size"]),
                        color=tuple(prim.get("color", (200, 200, 200))),
                        checker=prim.get("checker"),
                        color2=tuple(prim.get("color2", (40, 40, 40))),
                    )
                )
            elif prim["type"] == "point":
                points.append(
                    PointTarget(
                        position=np.asarray(prim["position"], dtype=float),
                        color=tuple(prim.get("color", (255, 255, 255))),
                        angular_size=math.radians(prim.get("angular_size_deg", 1.0)),
                    )
                )
            else:
                raise ValueError(f"unknown primitive type {prim['type']!r}")
        return cls(quads=tuple(quads), points=tuple(points), sky=tuple(d.get("sky", SKY)))


def demo_scene() -> Scene:
    """Checkerboard wall, floor and a few targets, roughly the working
    volume in front of the default camera."""
    wall = Quad(
        pose=Pose.from_axis_angle([0, 1, 0], 0.0, [0.0, 0.0, 2.0]),
        size=(3.0, 2.0),
        checker=0.25,
        color=(220, 220, 220),
        color2=(50, 60, 80),
    )
    floor = Quad(
        pose=Pose.from_axis_angle([1, 0, 0], -math.pi / 2, [0.0, 0.8, 1.0]),
        size=(3.0, 3.0),
        checker=0.5,
        color=(180, 160, 140),
        color2=(90, 80, 70),
    )
    return Scene(
        quads=(wall, floor),
        points=(
            PointTarget(position=[0.0, 0.0, 1.0], color=(255, 64, 64), angular_size=math.radians(2.0)),
            PointTarget(position=[-0.4, -0.2, 1.5], color=(64, 255, 64), angular_size=math.radians(1.5)),
        ),
    )


@lru_cache(maxsize=8)
def _unprojection_grid(intr: DoubleSphereIntrinsics):
    """Per-pixel unit directions and validity for a full sensor."""
    u = np.arange(intr.width, dtype=np.float64)
    v = np.arange(intr.height, dtype=np.float64)
    uu, vv = np.meshgrid(u, v)
    px = np.stack([uu, vv], axis=-1)
    dirs, valid = cam.unproject_batch(px, intr)
    return dirs.reshape(-1, 3), valid.reshape(-1)


def capture(scene: Scene, t_world_cam: Pose, intr: DoubleSphereIntrinsics) -> np.ndarray:
    """Render the scene as seen by a fisheye camera: (H, W, 3) uint8.
    Deterministic; pixels outside the lens validity bound are black."""
    dirs_cam, valid = _unprojection_grid(intr)
    n = dirs_cam.shape[0]
    r_wc = t_world_cam.rotation_matrix
    origin = t_world_cam.t
    dirs = dirs_cam @ r_wc.T

    depth = np.full(n, np.inf)
    color = np.empty((n, 3), dtype=np.uint8)
    color[:] = scene.sky

    for q in scene.quads:
        t_local = inverse(q.pose)
        o_l = t_local.apply(origin)
        d_l = dirs @ t_local.rotation_matrix.T
        dz = d_l[:, 2]
        dz_ok = np.abs(dz) > 1e-12
        # rays parallel to the plane get a negative sentinel, rejected below
        hit_t = np.where(dz_ok, -o_l[2] / np.where(dz_ok, dz, 1.0), -1.0)
        hx = o_l[0] + hit_t * d_l[:, 0]
        hy = o_l[1] + hit_t * d_l[:, 1]
        wx, wy = q.size[0] / 2.0, q.size[1] / 2.0
        hit = (hit_t > 1e-6) & (np.abs(hx) <= wx) & (np.abs(hy) <= wy) & (hit_t < depth)
        if not hit.any():
            continue
        if q.checker is not None:
            par = (
                np.floor((hx[hit] + wx) / q.checker).astype(np.int64)
                + np.floor((hy[hit] + wy) / q.checker).astype(np.int64)
            ) % 2
            shade = np.where(par[:, None] == 0, np.uint8(q.color), np.uint8(q.color2))
        else:
            shade = np.broadcast_to(np.uint8(q.color), (int(hit.sum()), 3))
        color[hit] = shade
        depth[hit] = hit_t[hit]

    for p in scene.points:
        to_p = p.position - origin
        dist = float(np.linalg.norm(to_p))
        if dist < 1e-9:
            continue
        cos_lim = math.cos(p.angular_size / 2.0)
        cos_ang = dirs @ (to_p / dist)
        hit = (cos_ang >= cos_lim) & (dist < depth)
        color[hit] = np.uint8(p.color)
        depth[hit] = dist

    color[~valid] = VIGNETTE
    return color.reshape(intr.height, intr.width, 3)
