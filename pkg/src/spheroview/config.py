"""Run configuration: file + override merging with strict key checking.

Angles and durations in config files use degrees / milliseconds (this is
a CLI/UI boundary); everything is converted to radians/seconds when the
internal objects are built. The effective merged configuration is echoed
to a sidecar JSON next to each command's primary output.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .headctl import JumpGuard, VelocityCaps
from .render import RenderConfig
from .sim import LatencyBudget, SimConfig


@dataclass
class HeadctlSection:
    fc_hz: float = 100.0
    v_max: float = 2.0               # m/s, guard cap on the mapped target
    omega_max: float = 180.0         # deg/s
    jump_threshold_m: float = 0.20
    jump_threshold_deg: float = 30.0
    reentry_m: float = 0.01
    reentry_deg: float = 1.0


@dataclass
class SimSection:
    control_hz: float = 250.0
    camera_hz: float = 45.0
    display_hz: float = 90.0
    duration_s: float = 16.0
    exposure_ms: float = 8.0
    transfer_ms: float = 10.0
    encode_ms: float = 6.0
    network_ms: float = 6.0
    decode_ms: float = 6.0
    render_ms: float = 4.0
    robot_v_max: float = 1.0         # m/s
    robot_omega_max: float = 180.0   # deg/s
    command_delay_ms: float = 100.0
    report_delay_ms: float = 10.0
    sweep_peak_speed: float = 0.5    # m/s, default operator trajectory


@dataclass
class RenderSection:
    r: float = 1.0
    out_width: int = 800
    out_height: int = 800
    eye_fov_deg: float = 90.0
    background: list[int] = field(default_factory=lambda: [0, 0, 0])
    ipd_m: float = 0.064


@dataclass
class ServeSection:
    port: int = 8473
    host: str = "127.0.0.1"
    frame_hz: float = 30.0
    camera_hz: float = 20.0
    pose_hz: float = 60.0
    stream_width: int = 512
    stream_height: int = 512
    jpeg_quality: int = 80
    capture_scale: float = 0.35      # live-capture sensor scale vs the rig


@dataclass
class RunConfig:
    headctl: HeadctlSection = field(default_factory=HeadctlSection)
    sim: SimSection = field(default_factory=SimSection)
    render: RenderSection = field(default_factory=RenderSection)
    serve: ServeSection = field(default_factory=ServeSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def sim_config(self) -> SimConfig:
        s, h = self.sim, self.headctl
        return SimConfig(
            control_hz=s.control_hz,
            camera_hz=s.camera_hz,
            display_hz=s.display_hz,
            duration=s.duration_s,
            budget=LatencyBudget(
                exposure=s.exposure_ms / 1e3,
                transfer=s.transfer_ms / 1e3,
                encode=s.encode_ms / 1e3,
                network=s.network_ms / 1e3,
                decode=s.decode_ms / 1e3,
                render=s.render_ms / 1e3,
            ),
            robot_v_max=s.robot_v_max,
            robot_omega_max=math.radians(s.robot_omega_max),
            command_delay=s.command_delay_ms / 1e3,
            report_delay=s.report_delay_ms / 1e3,
            headctl_fc_hz=h.fc_hz,
            headctl_v_max=h.v_max,
            headctl_omega_max=math.radians(h.omega_max),
            jump_threshold_m=h.jump_threshold_m,
            jump_threshold_rad=math.radians(h.jump_threshold_deg),
        )

    def jump_guard(self) -> JumpGuard:
        h = self.headctl
        return JumpGuard(
            fc_hz=h.fc_hz,
            caps=VelocityCaps(v_max=h.v_max, omega_max=math.radians(h.omega_max)),
            jump_threshold_m=h.jump_threshold_m,
            jump_threshold_rad=math.radians(h.jump_threshold_deg),
            reentry_m=h.reentry_m,
            reentry_rad=math.radians(h.reentry_deg),
        )

    def render_config(self) -> RenderConfig:
        r = self.render
        return RenderConfig(
            r=r.r,
            out_width=r.out_width,
            out_height=r.out_height,
            eye_fov=math.radians(r.eye_fov_deg),
            background=tuple(r.background),
        )


def _apply_section(obj, data: dict, path: str) -> None:
    known = {f.name for f in fields(obj)}
    for key, value in data.items():
        if key not in known:
            raise ValueError(f"unknown config key: {path}{key}")
        setattr(obj, key, value)


def from_dict(data: dict) -> RunConfig:
    cfg = RunConfig()
    sections = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    for key, value in data.items():
        if key == "schema":
            continue
        if key not in sections:
            raise ValueError(f"unknown config section: {key}")
        if not isinstance(value, dict):
            raise ValueError(f"config section {key} must be an object")
        _apply_section(sections[key], value, f"{key}.")
    return cfg


def merged(base: RunConfig, overrides: dict) -> RunConfig:
    data = base.to_dict()
    for section, values in overrides.items():
        if section == "schema":
            continue
        if section not in data:
            raise ValueError(f"unknown config section: {section}")
        for key, value in values.items():
            if key not in data[section]:
                raise ValueError(f"unknown config key: {section}.{key}")
            data[section][key] = value
    return from_dict(data)


def load(path) -> RunConfig:
    with open(path) as f:
        return from_dict(json.load(f))


def write_sidecar(output_path, cfg: RunConfig, argv: list[str] | None = None) -> Path:
    """Echo the effective configuration next to a command's output."""
    side = Path(str(output_path) + ".config.json")
    payload = {"schema": 1, "config": cfg.to_dict()}
    if argv is not None:
        payload["argv"] = list(argv)
    side.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return side
