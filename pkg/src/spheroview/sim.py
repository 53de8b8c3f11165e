"""Closed-loop teleoperation simulation and its metrics.

Replaces the physical rig: a rate-limited, command-delayed robot head
follows the mapped operator trajectory while a camera/display schedule
accounts for every stage of the frame pipeline. Event times live on an
integer-nanosecond grid at the control rate, so latency bookkeeping is
exact and runs are bit-reproducible.

Velocities are reported unscaled (published lag plots often scale the
robot trace for display; see README).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geom import Pose, compose, interpolate, inverse
from .headctl import FilterState, HeadMapping, JumpGuard, VelocityCaps, flatten_yaw, map_head


@dataclass
class LatencyBudget:
    """Per-frame pipeline stages, seconds. Defaults total 40 ms."""

    exposure: float = 0.008
    transfer: float = 0.010
    encode: float = 0.006
    network: float = 0.006
    decode: float = 0.006
    render: float = 0.004

    @property
    def total(self) -> float:
        return self.exposure + self.transfer + self.encode + self.network + self.decode + self.render


@dataclass
class RobotHeadModel:
    """Velocity-capped head that follows commands after a fixed delay."""

    actual: Pose = field(default_factory=Pose)
    v_max: float = 1.0
    omega_max: float = math.pi
    command_delay: float = 0.0
    report_delay: float = 0.0
    _commands: list[tuple[float, Pose]] = field(default_factory=list)

    def command(self, t: float, pose: Pose) -> None:
        if self._commands and t <= self._commands[-1][0]:
            raise ValueError("command timestamps must increase")
        self._commands.append((t, pose))

    def _delayed_target(self, t: float) -> Pose | None:
        # epsilon absorbs float noise when the delay is a tick multiple
        cutoff = t - self.command_delay + 1e-12
        target = None
        keep_from = 0
        for i, (stamp, pose) in enumerate(self._commands):
            if stamp <= cutoff:
                target = pose
                keep_from = i
            else:
                break
        # drop commands older than the newest applicable one
        if keep_from > 0:
            del self._commands[: keep_from]
        return target

    def step(self, t: float, dt: float) -> Pose:
        if dt <= 0:
            raise ValueError("dt must be positive")
        target = self._delayed_target(t)
        if target is None:
            return self.actual
        delta_t = target.t - self.actual.t
        dist = float(np.linalg.norm(delta_t))
        ang = compose(inverse(self.actual), target).rotation_angle()
        max_t = self.v_max * dt
        max_r = self.omega_max * dt
        if dist <= max_t and ang <= max_r:
            self.actual = target
            return self.actual
        s_t = 1.0 if dist <= max_t else max_t / dist
        s_r = 1.0 if ang <= max_r else max_r / ang
        from .geom import quat_slerp

        self.actual = Pose(quat_slerp(self.actual.q, target.q, s_r), self.actual.t + s_t * delta_t)
        return self.actual


@dataclass(frozen=True)
class Trajectory:
    """Timestamped keyframes; cubic Hermite (Catmull-Rom tangents) on
    translation, shortest-arc slerp on rotation."""

    times: np.ndarray
    poses: tuple[Pose, ...]

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) != len(self.poses) or len(t) < 2:
            raise ValueError("need >= 2 keyframes with matching timestamps")
        if not np.all(np.diff(t) > 0):
            raise ValueError("keyframe timestamps must be strictly increasing")
        object.__setattr__(self, "times", t)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def sample(self, t: float) -> Pose:
        ts = self.times
        if t <= ts[0]:
            return self.poses[0]
        if t >= ts[-1]:
            return self.poses[-1]
        i = int(np.searchsorted(ts, t, side="right") - 1)
        t0, t1 = ts[i], ts[i + 1]
        h = t1 - t0
        s = (t - t0) / h
        p0, p1 = self.poses[i].t, self.poses[i + 1].t
        pm = self.poses[i - 1].t if i > 0 else p0
        pp = self.poses[i + 2].t if i + 2 < len(self.poses) else p1
        tm = t1 - (ts[i - 1] if i > 0 else t0 - h)
        tp = (ts[i + 2] if i + 2 < len(self.poses) else t1 + h) - t0
        m0 = (p1 - pm) / tm * h
        m1 = (pp - p0) / tp * h
        s2, s3 = s * s, s * s * s
        trans = (
            (2 * s3 - 3 * s2 + 1) * p0
            + (s3 - 2 * s2 + s) * m0
            + (-2 * s3 + 3 * s2) * p1
            + (s3 - s2) * m1
        )
        rot = interpolate(self.poses[i], self.poses[i + 1], s)
        return Pose(rot.q, trans)

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "keyframes": [
                {"t": float(t), "pose": p.to_json()} for t, p in zip(self.times, self.poses)
            ],
        }

    @classmethod
    def from_json(cls, d: dict) -> "Trajectory":
        frames = d["keyframes"]
        return cls(
            times=np.array([k["t"] for k in frames], dtype=float),
            poses=tuple(Pose.from_json(k["pose"]) for k in frames),
        )


def make_sweep_trajectory(
    duration: float = 16.0,
    peak_speed: float = 0.5,
    keyframe_hz: float = 50.0,
    yaw_amplitude: float = math.radians(20.0),
) -> Trajectory:
    """Multi-axis sinusoidal head sweep with the given peak Cartesian
    speed (the lateral axis dominates)."""
    # per-axis peak velocities chosen so the combined Cartesian peak is
    # close to peak_speed: (0.94, 0.25, 0.23) has unit norm
    f1, f2, f3 = 0.21, 0.13, 0.34
    a1 = 0.94 * peak_speed / (2.0 * math.pi * f1)
    a2 = 0.25 * peak_speed / (2.0 * math.pi * f2)
    a3 = 0.23 * peak_speed / (2.0 * math.pi * f3)
    n = int(duration * keyframe_hz) + 1
    times = np.arange(n) / keyframe_hz
    poses = []
    for t in times:
        trans = np.array(
            [
                a1 * math.sin(2 * math.pi * f1 * t),
                a2 * math.sin(2 * math.pi * f2 * t + 0.9),
                a3 * math.sin(2 * math.pi * f3 * t + 2.1),
            ]
        )
        yaw = yaw_amplitude * math.sin(2 * math.pi * 0.17 * t + 0.4)
        poses.append(Pose.from_axis_angle([0, 0, 1], yaw, trans))
    return Trajectory(times=times, poses=tuple(poses))


@dataclass
class SimConfig:
    control_hz: float = 250.0
    camera_hz: float = 45.0
    display_hz: float = 90.0
    duration: float = 16.0
    budget: LatencyBudget = field(default_factory=LatencyBudget)
    robot_v_max: float = 1.0
    robot_omega_max: float = math.pi
    command_delay: float = 0.10
    report_delay: float = 0.01
    headctl_fc_hz: float = 100.0
    headctl_v_max: float = 2.0
    headctl_omega_max: float = math.pi
    jump_threshold_m: float = 0.20
    jump_threshold_rad: float = math.radians(30.0)


@dataclass
class SimTrace:
    """Per-control-tick time series plus per-frame latency events."""

    t: np.ndarray
    ds: np.ndarray
    v_op: np.ndarray
    v_rob: np.ndarray
    frame_latency: np.ndarray  # NaN on ticks without a completed frame
    capture_stamps: np.ndarray
    frame_latencies: np.ndarray

    def rows(self):
        for i in range(len(self.t)):
            yield (
                self.t[i],
                self.ds[i],
                self.v_op[i],
                self.v_rob[i],
                self.frame_latency[i],
            )

    def mean_frame_latency(self) -> float:
        return float(self.frame_latencies.mean())

    def deviation_velocity_correlation(self) -> float:
        return float(np.corrcoef(np.abs(self.v_op), self.ds)[0, 1])


def run_closed_loop(
    trajectory: Trajectory,
    config: SimConfig,
    frame_callback=None,
) -> SimTrace:
    """Step the full pipeline at the control rate.

    Per tick: sample the operator, map through the nominal poses, smooth
    and guard, command the delayed rate-limited robot head, and account
    for camera frames moving through the latency budget. Pixel rendering
    only happens через ``frame_callback`` (capture_stamp_s, robot pose at
    capture, operator target at display) when provided.
    """
    if config.display_hz < config.camera_hz:
        warnings.warn(
            f"display rate {config.display_hz} Hz below camera rate "
            f"{config.camera_hz} Hz: frames will be dropped",
            stacklevel=2,
        )
    dt_ns = round(1e9 / config.control_hz)
    dt = dt_ns * 1e-9
    n_ticks = int(round(config.duration * 1e9 / dt_ns))
    cam_period_ns = round(1e9 / config.camera_hz)
    budget_ns = round(config.budget.total * 1e9)

    op0 = trajectory.sample(0.0)
    mapping = HeadMapping.capture(t_robot_nom=flatten_yaw(op0), t_vr_raw=op0)
    guard = JumpGuard(
        fc_hz=config.headctl_fc_hz,
        caps=VelocityCaps(v_max=config.headctl_v_max, omega_max=config.headctl_omega_max),
        jump_threshold_m=config.jump_threshold_m,
        jump_threshold_rad=config.jump_threshold_rad,
    )
    state = FilterState()
    robot = RobotHeadModel(
        actual=map_head(mapping, op0),
        v_max=config.robot_v_max,
        omega_max=config.robot_omega_max,
        command_delay=config.command_delay,
    )

    t_arr = np.empty(n_ticks + 1)
    ds_arr = np.empty(n_ticks + 1)
    v_op_arr = np.zeros(n_ticks + 1)
    v_rob_arr = np.zeros(n_ticks + 1)
    lat_arr = np.full(n_ticks + 1, np.nan)
    stamps: list[float] = []
    latencies: list[float] = []

    pending: list[tuple[int, int, Pose]] = []  # (stamp_ns, ready_ns, robot pose at capture)
    next_cap_ns = 0
    prev_op = op0
    prev_rob = robot.actual

    for k in range(n_ticks + 1):
        t_ns = k * dt_ns
        t = t_ns * 1e-9
        op = trajectory.sample(t)
        target = map_head(mapping, op)
        cmd = guard.step(state, target, dt)
        if k > 0:
            robot.command(t, cmd)
        robot.step(t, dt)

        if t_ns >= next_cap_ns:
            pending.append((t_ns, t_ns + budget_ns, robot.actual))
            next_cap_ns += cam_period_ns

        done = [p for p in pending if p[1] <= t_ns]
        if done:
            pending = [p for p in pending if p[1] > t_ns]
            for stamp_ns, _ready_ns, robot_at_capture in done:
                latency = (t_ns - stamp_ns) * 1e-9
                stamps.append(stamp_ns * 1e-9)
                latencies.append(latency)
                lat_arr[k] = latency
                if frame_callback is not None:
                    frame_callback(stamp_ns * 1e-9, robot_at_capture, target)

        t_arr[k] = t
        ds_arr[k] = float(np.linalg.norm(target.t - robot.actual.t))
        if k > 0:
            v_op_arr[k] = float(np.linalg.norm(op.t - prev_op.t)) / dt
            v_rob_arr[k] = float(np.linalg.norm(robot.actual.t - prev_rob.t)) / dt
        prev_op, prev_rob = op, robot.actual

    return SimTrace(
        t=t_arr,
        ds=ds_arr,
        v_op=v_op_arr,
        v_rob=v_rob_arr,
        frame_latency=lat_arr,
        capture_stamps=np.asarray(stamps),
        frame_latencies=np.asarray(latencies),
    )


def estimate_lag(series_a, series_b, rate_hz: float) -> float:
    """Lag of ``series_b`` behind ``series_a`` in seconds: argmax of the
    normalized cross-correlation over integer shifts, refined with a
    parabolic sub-sample fit."""
    a = np.asarray(series_a, dtype=float)
    b = np.asarray(series_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("series must be 1-D and equally sampled")
    if a.std() < 1e-12 or b.std() < 1e-12:
        raise ValueError("no signal: a series has zero variance")
    a0 = (a - a.mean()) / a.std()
    b0 = (b - b.mean()) / b.std()
    c = np.correlate(b0, a0, mode="full")
    m = int(np.argmax(c))
    shift = m - (len(a0) - 1)
    if 0 < m < len(c) - 1:
        denom = c[m - 1] - 2.0 * c[m] + c[m + 1]
        if abs(denom) > 1e-12:
            shift += 0.5 * (c[m - 1] - c[m + 1]) / denom
    return float(shift / rate_hz)
