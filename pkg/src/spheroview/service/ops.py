"""Operation handlers behind the HTTP routes and the CLI subcommands."""

from __future__ import annotations

import base64
import io
import math

import numpy as np
from PIL import Image

from .. import calib, camera, config as cfgmod, render, sim
from ..geom import Pose
from . import models as m


def png_to_array(b64: str) -> np.ndarray:
    img = Image.open(io.BytesIO(base64.b64decode(b64))).convert("RGB")
    return np.asarray(img)


def array_to_png(arr: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def array_to_jpeg_bytes(arr: np.ndarray, quality: int = 80) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="JPEG", quality=quality)
    return buf.getvalue()


def run_error_curve(req: m.ErrorCurveRequest) -> m.ErrorCurveResponse:
    table = render.error_curve(req.dx, req.r, req.d_min, req.d_max, req.steps)
    return m.ErrorCurveResponse(
        rows=[
            m.ErrorCurvePoint(d_m=float(d), gamma_deg=math.degrees(g)) for d, g in table
        ],
        asymptote_deg=math.degrees(render.error_asymptote(req.dx, req.r)),
    )


def run_calibrate(req: m.CalibrateRequest) -> m.CalibrateResponse:
    rig = req.rig.to_rig() if req.rig is not None else camera.default_rig()
    ground_truth = None
    if req.synthetic is not None:
        syn = req.synthetic
        ground_truth = calib.default_ground_truth()
        samples = calib.generate_synthetic(
            ground_truth, rig, syn.n, noise_px=syn.noise_px, seed=syn.seed
        )
        rng = np.random.default_rng(syn.seed + 1)
        default_init = calib.perturbed(
            ground_truth,
            syn.perturb_translation_m,
            math.radians(syn.perturb_rotation_deg),
            rng,
        )
    elif req.samples is not None:
        samples = [
            calib.CalibSample(
                t_head=s.t_head.to_pose(),
                t_arm=s.t_arm.to_pose(),
                px_left=np.asarray(s.px_left),
                px_right=np.asarray(s.px_right),
            )
            for s in req.samples
        ]
        default_init = (Pose(), Pose(), Pose())
    else:
        raise ValueError("calibrate needs samples or synthetic")

    init = (
        req.init_t_cam.to_pose() if req.init_t_cam else default_init[0],
        req.init_t_mount.to_pose() if req.init_t_mount else default_init[1],
        req.init_t_mark.to_pose() if req.init_t_mark else default_init[2],
    )
    est = calib.solve(samples, rig, init)

    recovery = None
    if ground_truth is not None:
        from ..geom import compose, inverse

        gt_cam, gt_mount, gt_mark = ground_truth
        recovery = m.RecoveryErrors(
            t_cam_translation_m=float(np.linalg.norm(est.t_cam.t - gt_cam.t)),
            t_cam_rotation_deg=m.rotation_deg_between(gt_cam, est.t_cam),
            t_mount_translation_m=float(np.linalg.norm(est.t_mount.t - gt_mount.t)),
            t_mount_rotation_deg=m.rotation_deg_between(gt_mount, est.t_mount),
            t_mark_translation_m=float(np.linalg.norm(est.t_mark.t - gt_mark.t)),
        )
    return m.CalibrateResponse(
        t_cam=m.PoseModel.from_pose(est.t_cam),
        t_mount=m.PoseModel.from_pose(est.t_mount),
        t_mark=m.PoseModel.from_pose(est.t_mark),
        rms_px=est.rms_px,
        iterations=est.iterations,
        converged=est.converged,
        n_samples=len(samples),
        recovery=recovery,
    )


def run_render(req: m.RenderRequest) -> m.RenderResponse:
    frame = png_to_array(req.frame_png_b64)
    intr = (
        req.intrinsics.to_intrinsics()
        if req.intrinsics is not None
        else camera.default_rig().left
    )
    cfg = render.RenderConfig(
        r=req.r,
        out_width=req.out_width,
        out_height=req.out_height,
        eye_fov=math.radians(req.eye_fov_deg),
        background=tuple(req.background),
    )
    view = render.reproject(frame, intr, req.cam_pose.to_pose(), req.eye_pose.to_pose(), cfg)
    return m.RenderResponse(
        image_png_b64=array_to_png(view.image), render_ms=view.render_time * 1e3
    )


def run_simulate(req: m.SimulateRequest) -> m.SimulateResponse:
    run_cfg = cfgmod.merged(cfgmod.RunConfig(), req.config)
    sim_cfg = run_cfg.sim_config()
    if req.trajectory is not None:
        traj = sim.Trajectory.from_json({"keyframes": req.trajectory.keyframes})
    else:
        traj = sim.make_sweep_trajectory(
            duration=sim_cfg.duration, peak_speed=run_cfg.sim.sweep_peak_speed
        )
    trace = sim.run_closed_loop(traj, sim_cfg)
    lag = sim.estimate_lag(np.abs(trace.v_op), np.abs(trace.v_rob), sim_cfg.control_hz)
    summary = m.SimulateSummary(
        n_frames=len(trace.frame_latencies),
        mean_frame_latency_s=trace.mean_frame_latency(),
        p95_frame_latency_s=float(np.percentile(trace.frame_latencies, 95)),
        lag_s=lag,
        pearson_ds_vop=trace.deviation_velocity_correlation(),
        max_ds_m=float(trace.ds.max()),
    )
    rows: list[m.MetricsRow] = []
    if req.include_rows:
        rows = [
            m.MetricsRow(
                t_s=t,
                ds_m=ds,
                v_op_mps=vo,
                v_rob_mps=vr,
                frame_latency_s=None if math.isnan(lat) else lat,
            )
            for t, ds, vo, vr, lat in trace.rows()
        ]
    return m.SimulateResponse(summary=summary, rows=rows)
