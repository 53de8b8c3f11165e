"""Request/response models for the HTTP API (also used by the CLI)."""

from __future__ import annotations

import math

import numpy as np
from pydantic import BaseModel, Field, field_validator

from .. import camera
from ..geom import Pose


class PoseModel(BaseModel):
    q: list[float] = Field(default=[1.0, 0.0, 0.0, 0.0], min_length=4, max_length=4)
    t: list[float] = Field(default=[0.0, 0.0, 0.0], min_length=3, max_length=3)

    def to_pose(self) -> Pose:
        return Pose(np.asarray(self.q), np.asarray(self.t))

    @classmethod
    def from_pose(cls, p: Pose) -> "PoseModel":
        return cls(q=[float(v) for v in p.q], t=[float(v) for v in p.t])


class IntrinsicsModel(BaseModel):
    fx: float
    fy: float
    cx: float
    cy: float
    xi: float
    alpha: float
    width: int
    height: int

    def to_intrinsics(self) -> camera.DoubleSphereIntrinsics:
        return camera.DoubleSphereIntrinsics(**self.model_dump())

    @classmethod
    def from_intrinsics(cls, intr: camera.DoubleSphereIntrinsics) -> "IntrinsicsModel":
        return cls(**intr.to_json())


class RigModel(BaseModel):
    left: IntrinsicsModel
    right: IntrinsicsModel
    t_l_r: PoseModel

    def to_rig(self) -> camera.StereoRig:
        return camera.StereoRig(
            left=self.left.to_intrinsics(),
            right=self.right.to_intrinsics(),
            t_l_r=self.t_l_r.to_pose(),
        )

    @classmethod
    def from_rig(cls, rig: camera.StereoRig) -> "RigModel":
        return cls(
            left=IntrinsicsModel.from_intrinsics(rig.left),
            right=IntrinsicsModel.from_intrinsics(rig.right),
            t_l_r=PoseModel.from_pose(rig.t_l_r),
        )


class ErrorCurveRequest(BaseModel):
    dx: float = 0.1
    r: float = 1.0
    d_min: float = 0.2
    d_max: float = 3.0
    steps: int = 50


class ErrorCurvePoint(BaseModel):
    d_m: float
    gamma_deg: float


class ErrorCurveResponse(BaseModel):
    rows: list[ErrorCurvePoint]
    asymptote_deg: float


class SampleModel(BaseModel):
    t_head: PoseModel
    t_arm: PoseModel
    px_left: list[float] = Field(min_length=2, max_length=2)
    px_right: list[float] = Field(min_length=2, max_length=2)


class SyntheticSpec(BaseModel):
    n: int = 200
    noise_px: float = 0.0
    seed: int = 0
    perturb_translation_m: float = 0.05
    perturb_rotation_deg: float = 5.0


class CalibrateRequest(BaseModel):
    samples: list[SampleModel] | None = None
    synthetic: SyntheticSpec | None = None
    rig: RigModel | None = None
    init_t_cam: PoseModel | None = None
    init_t_mount: PoseModel | None = None
    init_t_mark: PoseModel | None = None

    @field_validator("synthetic")
    @classmethod
    def _one_source(cls, v, info):
        if v is not None and info.data.get("samples") is not None:
            raise ValueError("provide either samples or synthetic, not both")
        return v


class RecoveryErrors(BaseModel):
    t_cam_translation_m: float
    t_cam_rotation_deg: float
    t_mount_translation_m: float
    t_mount_rotation_deg: float
    t_mark_translation_m: float


class CalibrateResponse(BaseModel):
    t_cam: PoseModel
    t_mount: PoseModel
    t_mark: PoseModel
    rms_px: float
    iterations: int
    converged: bool
    n_samples: int
    recovery: RecoveryErrors | None = None


class RenderRequest(BaseModel):
    frame_png_b64: str
    intrinsics: IntrinsicsModel | None = None  # default rig left
    cam_pose: PoseModel = Field(default_factory=PoseModel)
    eye_pose: PoseModel = Field(default_factory=PoseModel)
    r: float = 1.0
    out_width: int = 800
    out_height: int = 800
    eye_fov_deg: float = 90.0
    background: list[int] = Field(default=[0, 0, 0], min_length=3, max_length=3)


class RenderResponse(BaseModel):
    image_png_b64: str
    render_ms: float


class TrajectoryModel(BaseModel):
    keyframes: list[dict]


class SimulateRequest(BaseModel):
    trajectory: TrajectoryModel | None = None  # default: standard sweep
    config: dict = Field(default_factory=dict)
    seed: int = 0
    include_rows: bool = False


class MetricsRow(BaseModel):
    t_s: float
    ds_m: float
    v_op_mps: float
    v_rob_mps: float
    frame_latency_s: float | None


class SimulateSummary(BaseModel):
    n_frames: int
    mean_frame_latency_s: float
    p95_frame_latency_s: float
    lag_s: float
    pearson_ds_vop: float
    max_ds_m: float


class SimulateResponse(BaseModel):
    summary: SimulateSummary
    rows: list[MetricsRow] = Field(default_factory=list)


def rotation_deg_between(a: Pose, b: Pose) -> float:
    from ..geom import compose, inverse

    return math.degrees(compose(inverse(a), b).rotation_angle())
