"""Live viewer session: one operator steering the simulated head.

The browser sends PoseMsg (its virtual head, camera axis convention:
z forward, y down) and clock pings over the WebSocket; the session runs
the robot-head simulation against wall-clock time and streams back
JPEG-encoded eye views plus the robot head pose. Text frames carry JSON
control: {"r": 0.8}, {"re_zero": true}, {"stereo": true}.

All state transitions live in `tick` / `handle_binary` / `handle_text`,
driven with explicit timestamps so tests can run a session without a
socket or a clock.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .. import camera, render, scene as scenemod
from ..config import RunConfig
from ..geom import Pose, compose
from ..headctl import FilterState, HeadMapping, map_head
from ..sim import RobotHeadModel
from ..transport import (
    ClockMsg,
    ENC_JPEG,
    FrameMsg,
    LatencyReport,
    PoseMsg,
    TimedPoseBuffer,
    decode_message,
    encode_message,
)
from .ops import array_to_jpeg_bytes

# camera axis convention used by the viewer: y down, z forward
VIEW_UP = np.array([0.0, -1.0, 0.0])
VIEW_FORWARD = np.array([0.0, 0.0, 1.0])

CAM_LEFT = 0
CAM_RIGHT = 1
ROBOT_FRAME_ID = 1


@dataclass
class _Captured:
    frame: np.ndarray
    stamp_ns: int
    t_world_cam: Pose


class LiveSession:
    def __init__(self, run_cfg: RunConfig | None = None, scene: scenemod.Scene | None = None,
                 rig: camera.StereoRig | None = None):
        run_cfg = run_cfg or RunConfig()
        self.cfg = run_cfg
        serve = run_cfg.serve
        rig = rig or camera.default_rig()
        self.capture_intr = rig.left.scaled(serve.capture_scale)
        self.t_l_r = rig.t_l_r
        self.scene = scene or scenemod.demo_scene()
        self.guard = run_cfg.jump_guard()
        self.filter_state = FilterState()
        sim_cfg = run_cfg.sim_config()
        self.robot = RobotHeadModel(
            v_max=sim_cfg.robot_v_max,
            omega_max=sim_cfg.robot_omega_max,
            command_delay=sim_cfg.command_delay,
        )
        self.op_buffer = TimedPoseBuffer(capacity=512)
        self.latest_op: Pose | None = None
        self.mapping: HeadMapping | None = None
        self.r = run_cfg.render.r
        self.stereo = False
        self.ipd = run_cfg.render.ipd_m
        self.stream_size = (serve.stream_width, serve.stream_height)
        self.jpeg_quality = serve.jpeg_quality
        self.cam_period_ns = round(1e9 / serve.camera_hz)
        self.latency = LatencyReport()
        self._captured: _Captured | None = None
        self._last_step_ns: int | None = None
        self._last_cmd_s: float = -1.0

    # -- inbound ----------------------------------------------------------

    def handle_message(self, msg, now_ns: int) -> list:
        if isinstance(msg, PoseMsg):
            self.latest_op = msg.pose
            try:
                self.op_buffer.push(msg.timestamp_ns, msg.pose)
            except ValueError:
                pass  # stale or duplicated stamp: latest value still updated
            if self.mapping is None:
                self.re_zero()
            return []
        if isinstance(msg, ClockMsg) and not msg.pong:
            return [ClockMsg(t1=msg.t1, t2=now_ns, t3=now_ns, pong=True)]
        return []

    def handle_binary(self, data: bytes, now_ns: int) -> list[bytes]:
        return [encode_message(m) for m in self.handle_message(decode_message(data), now_ns)]

    def handle_text(self, text: str, now_ns: int) -> list[bytes]:
        data = json.loads(text)
        if "r" in data:
            r = float(data["r"])
            if not 0.05 <= r <= 50.0:
                raise ValueError(f"sphere radius {r} outside [0.05, 50] m")
            self.r = r
        if data.get("re_zero"):
            self.re_zero()
        if "stereo" in data:
            self.stereo = bool(data["stereo"])
        return []

    def re_zero(self) -> None:
        """Capture nominal poses: robot looks straight ahead from its
        current pose; the operator's current pose (pitch/roll removed)
        becomes the VR nominal."""
        if self.latest_op is None:
            return
        self.mapping = HeadMapping.capture(
            t_robot_nom=self.robot.actual,
            t_vr_raw=self.latest_op,
            up=VIEW_UP,
            forward=VIEW_FORWARD,
        )
        self.filter_state = FilterState()

    # -- outbound ---------------------------------------------------------

    def _eye_pose(self, target: Pose, side: int) -> Pose:
        if self.stereo:
            sign = -0.5 if side == CAM_LEFT else +0.5
            offset = Pose(t=[sign * self.ipd, 0.0, 0.0])
        else:
            offset = Pose()
        eye = compose(target, offset)
        # keep the eye strictly inside the projection sphere; the robot
        # head is chasing the operator so the clamp releases on its own
        cam_pos = self._captured.t_world_cam.t
        off = eye.t - cam_pos
        dist = float(np.linalg.norm(off))
        limit = 0.9 * self.r
        if dist > limit:
            eye = Pose(eye.q, cam_pos + off * (limit / dist))
        return eye

    def tick_bytes(self, now_ns: int) -> list[bytes]:
        return [encode_message(m) for m in self.tick(now_ns)]

    def tick(self, now_ns: int) -> list:
        """Advance the simulation to ``now_ns`` and emit outbound messages."""
        if self.latest_op is None or self.mapping is None:
            return []
        if self._last_step_ns is None:
            self._last_step_ns = now_ns
            return []
        dt = (now_ns - self._last_step_ns) * 1e-9
        if dt <= 0:
            return []
        dt = min(dt, 0.1)
        self._last_step_ns = now_ns

        target = map_head(self.mapping, self.latest_op)
        cmd = self.guard.step(self.filter_state, target, dt)
        now_s = now_ns * 1e-9
        if now_s > self._last_cmd_s:
            self.robot.command(now_s, cmd)
            self._last_cmd_s = now_s
        self.robot.step(now_s, dt)

        if self._captured is None or now_ns - self._captured.stamp_ns >= self.cam_period_ns:
            frame = scenemod.capture(self.scene, self.robot.actual, self.capture_intr)
            self._captured = _Captured(frame=frame, stamp_ns=now_ns, t_world_cam=self.robot.actual)

        out_w, out_h = self.stream_size
        cfg = render.RenderConfig(
            r=self.r, out_width=out_w, out_height=out_h, eye_fov=math.radians(90.0)
        )
        out = []
        sides = (CAM_LEFT, CAM_RIGHT) if self.stereo else (CAM_LEFT,)
        for side in sides:
            eye = self._eye_pose(target, side)
            view = render.reproject(
                self._captured.frame, self.capture_intr, self._captured.t_world_cam, eye, cfg
            )
            payload = array_to_jpeg_bytes(view.image, self.jpeg_quality)
            out.append(
                FrameMsg(
                    capture_timestamp_ns=self._captured.stamp_ns,
                    camera_id=side,
                    encoding=ENC_JPEG,
                    width=out_w,
                    height=out_h,
                    payload=payload,
                )
            )
        self.latency.add(self._captured.stamp_ns, now_ns)
        out.append(PoseMsg(timestamp_ns=now_ns, frame_id=ROBOT_FRAME_ID, pose=self.robot.actual))
        return out
