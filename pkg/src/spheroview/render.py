"""Constant-distance spherical reprojection of wide-angle frames.

Each output pixel of a virtual pinhole eye casts a ray, intersects the
sphere of radius ``r`` centered at the physical camera, and looks the
intersection point up in the fisheye frame with bilinear interpolation.
Pure rotations of the eye are exact by construction; translations
distort objects off the assumed distance by the closed-form angular
error ``angular_error``.

The hot loop runs in float32 over fixed row blocks (block layout is
independent of the worker count, so output bytes are identical for any
``workers`` value) and parallelizes across blocks with threads; numpy
releases the GIL on the block-sized array ops.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _fastrender
from .camera import DoubleSphereIntrinsics, StereoRig
from .geom import Pose, compose, inverse

_BLOCK_ROWS = 50
_POOL: ThreadPoolExecutor | None = None


def _shared_pool() -> ThreadPoolExecutor:
    global _POOL
    if _POOL is None:
        _POOL = ThreadPoolExecutor()
    return _POOL


@dataclass(frozen=True)
class RenderConfig:
    r: float = 1.0
    out_width: int = 800
    out_height: int = 800
    eye_fov: float = math.pi / 2  # vertical, radians
    background: tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("sphere radius must be positive")
        if self.out_width <= 0 or self.out_height <= 0:
            raise ValueError("output size must be positive")
        if not 0.0 < self.eye_fov < math.pi:
            raise ValueError("eye_fov must be in (0, pi)")

    @property
    def focal(self) -> float:
        return (self.out_height / 2.0) / math.tan(self.eye_fov / 2.0)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.out_width - 1) / 2.0, (self.out_height - 1) / 2.0)


@dataclass
class EyeView:
    image: np.ndarray
    t_world_eye: Pose
    render_time: float = 0.0


@lru_cache(maxsize=8)
def _eye_rays(cfg: RenderConfig) -> np.ndarray:
    """Unit pinhole rays of the output camera, float32 (H, W, 3)."""
    cx, cy = cfg.center
    f = cfg.focal
    u = (np.arange(cfg.out_width, dtype=np.float32) - np.float32(cx)) / np.float32(f)
    v = (np.arange(cfg.out_height, dtype=np.float32) - np.float32(cy)) / np.float32(f)
    uu, vv = np.meshgrid(u, v)
    d = np.stack([uu, vv, np.ones_like(uu)], axis=-1)
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    return d


def _reproject_block(
    rays: np.ndarray,
    out: np.ndarray,
    frame: np.ndarray,
    intr: DoubleSphereIntrinsics,
    rot_cam_eye: np.ndarray,
    origin_cam: np.ndarray,
    c0: float,
    cfg: RenderConfig,
) -> None:
    h, w, _ = rays.shape
    d = rays.reshape(-1, 3) @ rot_cam_eye.T

    dx, dy, dz = d[:, 0], d[:, 1], d[:, 2]
    b = dx * origin_cam[0] + dy * origin_cam[1] + dz * origin_cam[2]
    # eye strictly inside the sphere: c0 < 0, so one forward intersection
    t = np.sqrt(b * b - np.float32(c0)) - b
    px = origin_cam[0] + t * dx
    py = origin_cam[1] + t * dy
    pz = origin_cam[2] + t * dz

    r2 = px * px + py * py
    d1 = np.sqrt(r2 + pz * pz)
    zeta = np.float32(intr.xi) * d1 + pz
    d2 = np.sqrt(r2 + zeta * zeta)
    denom = np.float32(intr.alpha) * d2 + np.float32(1.0 - intr.alpha) * zeta
    valid = (pz > np.float32(-intr.w2) * d1) & (denom > np.float32(1e-9))
    denom = np.where(valid, denom, np.float32(1.0))
    inv = np.float32(1.0) / denom
    u = np.float32(intr.fx) * px * inv + np.float32(intr.cx)
    v = np.float32(intr.fy) * py * inv + np.float32(intr.cy)

    src_h, src_w = frame.shape[:2]
    inside = (u >= 0) & (u <= src_w - 1) & (v >= 0) & (v <= src_h - 1)
    valid &= inside
    u = np.where(valid, u, np.float32(0.0))
    v = np.where(valid, v, np.float32(0.0))

    u0 = u.astype(np.int32)
    v0 = v.astype(np.int32)
    fu = (u - u0)[:, None]
    fv = (v - v0)[:, None]
    u1 = np.minimum(u0 + 1, src_w - 1)
    v1 = np.minimum(v0 + 1, src_h - 1)

    flat = frame.reshape(-1, frame.shape[2])
    base0 = v0 * src_w
    base1 = v1 * src_w
    c00 = flat.take(base0 + u0, axis=0).astype(np.float32)
    c01 = flat.take(base0 + u1, axis=0).astype(np.float32)
    c10 = flat.take(base1 + u0, axis=0).astype(np.float32)
    c11 = flat.take(base1 + u1, axis=0).astype(np.float32)

    top = c00 + fu * (c01 - c00)
    bot = c10 + fu * (c11 - c10)
    rgb = top + fv * (bot - top)

    np.rint(rgb, out=rgb)
    block = rgb.astype(np.uint8)
    block[~valid] = np.asarray(cfg.background, dtype=np.uint8)
    out[:] = block.reshape(h, w, -1)


def reproject(
    frame: np.ndarray,
    intr: DoubleSphereIntrinsics,
    t_world_cam: Pose,
    t_world_eye: Pose,
    cfg: RenderConfig,
    workers: int | None = None,
) -> EyeView:
    """Re-render ``frame`` (H, W, 3 uint8) from the eye pose through the
    sphere of radius ``cfg.r`` centered at the camera."""
    start = time.perf_counter()
    frame = np.ascontiguousarray(frame)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ValueError("frame must be HxWx3")

    offset = t_world_eye.t - t_world_cam.t
    if float(np.linalg.norm(offset)) >= cfg.r:
        raise ValueError(
            "eye outside projection sphere: |eye - camera| = "
            f"{np.linalg.norm(offset):.3f} m >= r = {cfg.r} m"
        )

    r_wc = t_world_cam.rotation_matrix
    r_we = t_world_eye.rotation_matrix
    rot_cam_eye = (r_wc.T @ r_we).astype(np.float32)
    origin_cam = (r_wc.T @ offset).astype(np.float32)
    c0 = float(origin_cam @ origin_cam) - cfg.r * cfg.r

    rays = _eye_rays(cfg)
    out = np.empty((cfg.out_height, cfg.out_width, 3), dtype=np.uint8)

    if _fastrender.HAVE_NUMBA:
        bg = np.asarray(cfg.background, dtype=np.uint8)
        _fastrender.reproject_kernel(
            rays, frame, out, rot_cam_eye, origin_cam, np.float32(c0),
            np.float32(intr.fx), np.float32(intr.fy),
            np.float32(intr.cx), np.float32(intr.cy),
            np.float32(intr.xi), np.float32(intr.alpha), np.float32(intr.w2),
            bg[0], bg[1], bg[2],
        )
    else:
        blocks = [
            (y, min(y + _BLOCK_ROWS, cfg.out_height))
            for y in range(0, cfg.out_height, _BLOCK_ROWS)
        ]

        def run(span):
            y0, y1 = span
            _reproject_block(
                rays[y0:y1], out[y0:y1], frame, intr, rot_cam_eye, origin_cam, c0, cfg
            )

        if workers == 1:
            for span in blocks:
                run(span)
        else:
            list(_shared_pool().map(run, blocks))

    return EyeView(image=out, t_world_eye=t_world_eye, render_time=time.perf_counter() - start)


def lookup_directions(
    intr: DoubleSphereIntrinsics, t_world_cam: Pose, t_world_eye: Pose, cfg: RenderConfig
):
    """Float64 shader math for verification: per-pixel world-frame ray
    directions and the world-frame directions (from the camera) of the
    sphere points actually looked up. With coincident origins the two
    are equal by construction."""
    cx, cy = cfg.center
    f = cfg.focal
    u = (np.arange(cfg.out_width, dtype=np.float64) - cx) / f
    v = (np.arange(cfg.out_height, dtype=np.float64) - cy) / f
    uu, vv = np.meshgrid(u, v)
    d = np.stack([uu, vv, np.ones_like(uu)], axis=-1).reshape(-1, 3)
    d /= np.linalg.norm(d, axis=-1, keepdims=True)

    r_we = t_world_eye.rotation_matrix
    ray_world = d @ r_we.T
    r_wc = t_world_cam.rotation_matrix
    origin_cam = r_wc.T @ (t_world_eye.t - t_world_cam.t)
    d_cam = ray_world @ r_wc
    b = d_cam @ origin_cam
    c0 = float(origin_cam @ origin_cam) - cfg.r * cfg.r
    t = -b + np.sqrt(b * b - c0)
    point_cam = origin_cam + t[:, None] * d_cam
    src_dir_world = (point_cam / np.linalg.norm(point_cam, axis=1, keepdims=True)) @ r_wc.T
    return ray_world, src_dir_world


def angular_error(d: float | np.ndarray, dx: float, r: float) -> float | np.ndarray:
    """Bearing error (radians) of an object at distance ``d`` when the eye
    translates ``dx`` perpendicular to the view ray under the constant-
    distance-``r`` assumption: atan(d/dx) - atan(r/dx); zero at dx=0."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0) or r <= 0 or dx < 0:
        raise ValueError("require d > 0, r > 0, dx >= 0")
    if dx == 0.0:
        out = np.zeros_like(d)
    else:
        out = np.arctan(d / dx) - np.arctan(r / dx)
    return float(out) if out.ndim == 0 else out


def error_asymptote(dx: float, r: float) -> float:
    """Large-distance limit of :func:`angular_error` (radians)."""
    if dx == 0.0:
        return 0.0
    return math.pi / 2 - math.atan(r / dx)


def error_curve(dx: float, r: float, d_min: float, d_max: float, steps: int) -> np.ndarray:
    """(steps, 2) table of (d, gamma_radians) on a uniform distance grid."""
    if not 0 < d_min < d_max:
        raise ValueError("require 0 < d_min < d_max")
    if steps < 2:
        raise ValueError("need at least two steps")
    d = np.linspace(d_min, d_max, steps)
    return np.stack([d, angular_error(d, dx, r)], axis=1)


@dataclass
class StereoView:
    left: EyeView
    right: EyeView
    total_time: float


def default_eye_offsets(ipd: float = 0.064) -> tuple[Pose, Pose]:
    """Eye poses relative to the head: +/- half the interpupillary
    distance along the head x axis."""
    return Pose(t=[-ipd / 2, 0.0, 0.0]), Pose(t=[+ipd / 2, 0.0, 0.0])


def render_stereo(
    frame_left: np.ndarray,
    frame_right: np.ndarray,
    rig: StereoRig,
    t_world_cam_left: Pose,
    t_world_head: Pose,
    cfg: RenderConfig,
    eye_offsets: tuple[Pose, Pose] | None = None,
    workers: int | None = None,
) -> StereoView:
    """Render both eyes, each against its own camera's sphere."""
    start = time.perf_counter()
    if eye_offsets is None:
        eye_offsets = default_eye_offsets()
    t_world_cam_right = compose(t_world_cam_left, rig.t_l_r)
    eye_l = compose(t_world_head, eye_offsets[0])
    eye_r = compose(t_world_head, eye_offsets[1])
    left = reproject(frame_left, rig.left, t_world_cam_left, eye_l, cfg, workers)
    right = reproject(frame_right, rig.right, t_world_cam_right, eye_r, cfg, workers)
    return StereoView(left=left, right=right, total_time=time.perf_counter() - start)
