"""Operator head mapping and smoothing.

Maps the tracked head pose from VR space into robot space through a pair
of nominal ("looking straight ahead") poses, smooths the result with a
single-pole low-pass filter, and guards against tracking jumps with a
velocity-limited approach mode.

Frame convention: world up is +z, head forward is +x, yaw rotates about
+z. A yaw-flattened rotation keeps the head's z-axis aligned with world
up exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geom import Pose, compose, interpolate, inverse

UP = np.array([0.0, 0.0, 1.0])
FORWARD = np.array([1.0, 0.0, 0.0])


def flatten_yaw(p: Pose, up=UP, forward=FORWARD) -> Pose:
    """Replace the rotation by its pure-yaw component about ``up``;
    translation is kept. Raises for gaze parallel to ``up``."""
    up = np.asarray(up, dtype=float)
    up = up / np.linalg.norm(up)
    forward = np.asarray(forward, dtype=float)
    fwd = p.rotation_matrix @ forward
    horiz = fwd - (fwd @ up) * up
    n = np.linalg.norm(horiz)
    if n < 1e-6:
        raise ValueError("undefined yaw: forward axis parallel to up")
    horiz /= n
    # yaw measured in the plane orthogonal to up, from the world forward axis
    ref = forward - (forward @ up) * up
    ref /= np.linalg.norm(ref)
    yaw = math.atan2(float(np.cross(ref, horiz) @ up), float(ref @ horiz))
    return Pose.from_axis_angle(up, yaw, p.t)


def yaw_of(p: Pose, up=UP) -> float:
    """Yaw angle (radians) of the pose's forward axis about ``up``."""
    flat = flatten_yaw(p, up)
    return 2.0 * math.atan2(float(flat.q[1:] @ np.asarray(up) / np.linalg.norm(up)), float(flat.q[0]))


@dataclass(frozen=True)
class HeadMapping:
    """Nominal-pose pair anchoring the VR-to-robot head map."""

    t_robot_nom: Pose
    t_vr_nom: Pose

    @classmethod
    def capture(cls, t_robot_nom: Pose, t_vr_raw: Pose, up=UP, forward=FORWARD) -> "HeadMapping":
        """Record nominal poses; residual pitch/roll is removed from the
        VR side so both nominals agree on 'straight ahead'."""
        return cls(t_robot_nom=t_robot_nom, t_vr_nom=flatten_yaw(t_vr_raw, up, forward))


def map_head(m: HeadMapping, t_vr_head: Pose) -> Pose:
    """Robot-space head target: T_robot_nom * inv(T_vr_nom) * T_vr_head."""
    return compose(m.t_robot_nom, compose(inverse(m.t_vr_nom), t_vr_head))


class Mode(Enum):
    TRACKING = "tracking"
    APPROACH = "approach"


def filter_alpha(dt: float, fc_hz: float) -> float:
    """Blend factor of the single-pole low-pass at time step dt."""
    return dt / (dt + 1.0 / (2.0 * math.pi * fc_hz))


@dataclass
class VelocityCaps:
    v_max: float = 0.5          # m/s
    omega_max: float = math.radians(90.0)  # rad/s


@dataclass
class FilterState:
    """Owned by a single control loop; see :func:`filter_step`."""

    current: Pose | None = None
    mode: Mode = Mode.TRACKING

    @property
    def initialized(self) -> bool:
        return self.current is not None


def filter_step(state: FilterState, target: Pose, dt: float, fc_hz: float = 100.0) -> Pose:
    """One low-pass tick toward ``target``. First call snaps to target."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if state.current is None:
        state.current = target
        return target
    a = filter_alpha(dt, fc_hz)
    state.current = interpolate(state.current, target, a)
    return state.current


def _step_toward(current: Pose, target: Pose, max_t: float, max_r: float) -> Pose:
    """Move from current toward target, translation clamped to max_t
    meters and rotation to max_r radians."""
    delta_t = target.t - current.t
    dist = float(np.linalg.norm(delta_t))
    ang = compose(inverse(current), target).rotation_angle()
    s_t = 1.0 if dist <= max_t else max_t / dist
    s_r = 1.0 if ang <= max_r else max_r / ang
    t_new = current.t + s_t * delta_t
    from .geom import quat_slerp

    q_new = quat_slerp(current.q, target.q, s_r)
    return Pose(q_new, t_new)


@dataclass
class JumpGuard:
    """Jump-monitored filter: large target jumps switch to a slow
    velocity-capped approach; per-tick motion never exceeds the caps in
    either mode."""

    fc_hz: float = 100.0
    caps: VelocityCaps = field(default_factory=VelocityCaps)
    jump_threshold_m: float = 0.20
    jump_threshold_rad: float = math.radians(30.0)
    reentry_m: float = 0.01
    reentry_rad: float = math.radians(1.0)

    def step(self, state: FilterState, target: Pose, dt: float) -> Pose:
        if dt <= 0:
            raise ValueError("dt must be positive")
        if state.current is None:
            state.current = target
            state.mode = Mode.TRACKING
            return target
        dist = float(np.linalg.norm(target.t - state.current.t))
        ang = compose(inverse(state.current), target).rotation_angle()
        if state.mode is Mode.TRACKING:
            if dist > self.jump_threshold_m or ang > self.jump_threshold_rad:
                state.mode = Mode.APPROACH
        else:
            if dist <= self.reentry_m and ang <= self.reentry_rad:
                state.mode = Mode.TRACKING

        max_t = self.caps.v_max * dt
        max_r = self.caps.omega_max * dt
        if state.mode is Mode.APPROACH:
            state.current = _step_toward(state.current, target, max_t, max_r)
        else:
            a = filter_alpha(dt, self.fc_hz)
            filtered = interpolate(state.current, target, a)
            # cap also applies while tracking: the guard's contract is that
            # no output tick ever exceeds the velocity limits
            state.current = _step_toward(state.current, filtered, max_t, max_r)
        return state.current
