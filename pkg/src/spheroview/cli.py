"""Command-line entrypoint.

Subcommands: calibrate, render, error-curve, simulate, serve. Batch
commands invoke the same operation handlers as the HTTP API and write
their artifacts (JSON/CSV/PNG) locally; each primary output gets a
``<output>.config.json`` sidecar echoing the effective configuration.

Exit codes: 0 success, 1 usage error, 2 runtime/solver error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, calib, camera, config as cfgmod, render, scene as scenemod, sim
from .geom import Pose
from .service import models as m, ops

PORT_ENV = "SPHEROVIEW_PORT"


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the CLI contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self.exit_code_usage(message))

    def exit_code_usage(self, message) -> int:
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        return 1


def _load_json(path):
    with open(path) as f:
        return json.load(f)


def _load_pose(path) -> Pose:
    return Pose.from_json(_load_json(path))


def _load_config(path: str | None, overrides: dict | None = None) -> cfgmod.RunConfig:
    cfg = cfgmod.load(path) if path else cfgmod.RunConfig()
    if overrides:
        cfg = cfgmod.merged(cfg, overrides)
    return cfg


def _write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))


def build_parser() -> _Parser:
    fmt = {"formatter_class": argparse.ArgumentDefaultsHelpFormatter}
    p = _Parser(prog="spheroview", description=__doc__)
    p.add_argument("--version", action="version", version=f"spheroview {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ec = sub.add_parser("error-curve", help="tabulate the spherical-reprojection angular error", **fmt)
    ec.add_argument("--dx", type=float, default=0.1, help="eye translation, m (default 0.1)")
    ec.add_argument("--r", type=float, default=1.0, help="sphere radius, m (default 1.0)")
    ec.add_argument("--d-min", type=float, default=0.2)
    ec.add_argument("--d-max", type=float, default=3.0)
    ec.add_argument("--steps", type=int, default=50)
    ec.add_argument("--csv", help="output CSV (columns d_m, gamma_deg); stdout if omitted")

    ca = sub.add_parser("calibrate", help="estimate camera/mount/marker transforms", **fmt)
    ca.add_argument("--samples", help="samples JSON (from a prior --samples-out)")
    ca.add_argument("--synthetic", action="store_true", help="generate a synthetic sample set")
    ca.add_argument("--n", type=int, default=200, help="synthetic sample count")
    ca.add_argument("--noise-px", type=float, default=0.0, help="synthetic pixel noise sigma")
    ca.add_argument("--seed", type=int, default=0)
    ca.add_argument("--rig", help="rig JSON (default: built-in rig)")
    ca.add_argument("--init", help="JSON with initial t_cam/t_mount/t_mark poses")
    ca.add_argument("--samples-out", help="write the generated samples here")
    ca.add_argument("--out", required=True, help="estimate JSON output")

    rd = sub.add_parser("render", help="spherical reprojection of one frame", **fmt)
    rd.add_argument("--frame", required=True, help="input PNG")
    rd.add_argument("--rig", help="rig JSON (default: built-in rig)")
    rd.add_argument("--side", choices=("left", "right"), default="left")
    rd.add_argument("--cam-pose", help="camera pose JSON (default identity)")
    rd.add_argument("--eye-pose", help="eye pose JSON (default identity)")
    rd.add_argument("--r", type=float, default=1.0)
    rd.add_argument("--width", type=int, default=800)
    rd.add_argument("--height", type=int, default=800)
    rd.add_argument("--fov-deg", type=float, default=90.0)
    rd.add_argument("--out", required=True, help="output PNG")

    si = sub.add_parser("simulate", help="closed-loop run with latency metrics", **fmt)
    si.add_argument("--scene", help="scene JSON (needed for --frames)")
    si.add_argument("--trajectory", help="trajectory JSON (default: standard sweep)")
    si.add_argument("--config", help="run config JSON")
    si.add_argument("--metrics", required=True, help="metrics CSV output")
    si.add_argument("--frames", help="directory for rendered eye-view PNGs")
    si.add_argument("--seed", type=int, default=0)
    si.add_argument("--duration", type=float, help="override sim.duration_s")

    sv = sub.add_parser("serve", help="run the HTTP/WebSocket service", **fmt)
    sv.add_argument("--port", type=int, help=f"HTTP+WS port (default ${PORT_ENV} or config)")
    sv.add_argument("--host", default=None)
    sv.add_argument("--scene", help="scene JSON for live sessions")
    sv.add_argument("--config", help="run config JSON")
    sv.add_argument("--ui", action="store_true", help="serve the browser viewer at /")
    sv.add_argument("--no-tcp", action="store_true", help="skip the raw TCP carrier on port+1")
    return p


def cmd_error_curve(args, argv) -> int:
    req = m.ErrorCurveRequest(dx=args.dx, r=args.r, d_min=args.d_min, d_max=args.d_max, steps=args.steps)
    resp = ops.run_error_curve(req)
    rows = [("d_m", "gamma_deg")] + [(repr(p.d_m), repr(p.gamma_deg)) for p in resp.rows]
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            csv.writer(f).writerows(rows)
        cfgmod.write_sidecar(args.csv, cfgmod.RunConfig(), argv)
        print(f"wrote {args.csv} ({len(resp.rows)} rows, asymptote {resp.asymptote_deg:.4f} deg)")
    else:
        w = csv.writer(sys.stdout)
        w.writerows(rows)
    return 0


def cmd_calibrate(args, argv) -> int:
    if not args.synthetic and not args.samples:
        print("calibrate: need --samples or --synthetic", file=sys.stderr)
        return 1
    rig_model = None
    if args.rig:
        rig_model = m.RigModel.from_rig(camera.load_rig(args.rig))
    init = {}
    if args.init:
        d = _load_json(args.init)
        init = {
            "init_t_cam": m.PoseModel(**d["t_cam"]),
            "init_t_mount": m.PoseModel(**d["t_mount"]),
            "init_t_mark": m.PoseModel(**d["t_mark"]),
        }
    if args.synthetic:
        req = m.CalibrateRequest(
            synthetic=m.SyntheticSpec(n=args.n, noise_px=args.noise_px, seed=args.seed),
            rig=rig_model,
            **init,
        )
        if args.samples_out:
            rig = rig_model.to_rig() if rig_model else camera.default_rig()
            samples = calib.generate_synthetic(
                calib.default_ground_truth(), rig, args.n, noise_px=args.noise_px, seed=args.seed
            )
            _write_json(args.samples_out, calib.samples_to_json(samples))
    else:
        data = _load_json(args.samples)
        req = m.CalibrateRequest(
            samples=[
                m.SampleModel(
                    t_head=m.PoseModel(**s["t_head"]),
                    t_arm=m.PoseModel(**s["t_arm"]),
                    px_left=s["px_left"],
                    px_right=s["px_right"],
                )
                for s in data["samples"]
            ],
            rig=rig_model,
            **init,
        )
    resp = ops.run_calibrate(req)
    payload = {"schema": 1, **json.loads(resp.model_dump_json())}
    _write_json(args.out, payload)
    cfgmod.write_sidecar(args.out, cfgmod.RunConfig(), argv)
    status = "converged" if resp.converged else "NOT converged"
    print(f"wrote {args.out}: rms {resp.rms_px:.4g} px after {resp.iterations} iterations ({status})")
    return 0 if resp.converged else 2


def cmd_render(args, argv) -> int:
    from PIL import Image

    rig = camera.load_rig(args.rig) if args.rig else camera.default_rig()
    intr = rig.left if args.side == "left" else rig.right
    frame = np.asarray(Image.open(args.frame).convert("RGB"))
    cfg = render.RenderConfig(
        r=args.r,
        out_width=args.width,
        out_height=args.height,
        eye_fov=np.radians(args.fov_deg),
    )
    cam_pose = _load_pose(args.cam_pose) if args.cam_pose else Pose()
    eye_pose = _load_pose(args.eye_pose) if args.eye_pose else Pose()
    view = render.reproject(frame, intr, cam_pose, eye_pose, cfg)
    Image.fromarray(view.image).save(args.out)
    cfgmod.write_sidecar(args.out, cfgmod.RunConfig(), argv)
    print(f"wrote {args.out} ({view.render_time * 1e3:.1f} ms)")
    return 0


def cmd_simulate(args, argv) -> int:
    run_cfg = _load_config(args.config)
    if args.duration is not None:
        run_cfg = cfgmod.merged(run_cfg, {"sim": {"duration_s": args.duration}})
    sim_cfg = run_cfg.sim_config()
    if args.trajectory:
        traj = sim.Trajectory.from_json(_load_json(args.trajectory))
    else:
        traj = sim.make_sweep_trajectory(
            duration=sim_cfg.duration, peak_speed=run_cfg.sim.sweep_peak_speed
        )

    frame_callback = None
    if args.frames:
        if not args.scene:
            print("simulate: --frames requires --scene", file=sys.stderr)
            return 1
        from PIL import Image

        scn = scenemod.Scene.from_json(_load_json(args.scene))
        out_dir = Path(args.frames)
        out_dir.mkdir(parents=True, exist_ok=True)
        intr = camera.default_rig().left.scaled(run_cfg.serve.capture_scale)
        rcfg = run_cfg.render_config()

        def frame_callback(stamp_s, robot_pose, eye_target):
            frame = scenemod.capture(scn, robot_pose, intr)
            view = render.reproject(frame, intr, robot_pose, eye_target, rcfg)
            Image.fromarray(view.image).save(out_dir / f"eye_{round(stamp_s * 1e6):012d}us.png")

    trace = sim.run_closed_loop(traj, sim_cfg, frame_callback=frame_callback)
    with open(args.metrics, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(("t_s", "ds_m", "v_op_mps", "v_rob_mps", "frame_latency_s"))
        for t, ds, vo, vr, lat in trace.rows():
            w.writerow(
                (repr(float(t)), repr(float(ds)), repr(float(vo)), repr(float(vr)),
                 "" if np.isnan(lat) else repr(float(lat)))
            )
    cfgmod.write_sidecar(args.metrics, run_cfg, argv)
    lag = sim.estimate_lag(np.abs(trace.v_op), np.abs(trace.v_rob), sim_cfg.control_hz)
    summary = {
        "n_frames": int(len(trace.frame_latencies)),
        "mean_frame_latency_s": trace.mean_frame_latency(),
        "lag_s": lag,
        "pearson_ds_vop": trace.deviation_velocity_correlation(),
        "max_ds_m": float(trace.ds.max()),
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_serve(args, argv) -> int:
    import asyncio

    import uvicorn

    from .service import create_app
    from .service.tcp import serve_tcp

    run_cfg = _load_config(args.config)
    port = args.port or int(os.environ.get(PORT_ENV, run_cfg.serve.port))
    host = args.host or run_cfg.serve.host
    scn = scenemod.Scene.from_json(_load_json(args.scene)) if args.scene else None
    ui_dir = None
    if args.ui:
        ui_dir = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        if not ui_dir.is_dir():
            print(f"serve: viewer assets not found at {ui_dir} (build the frontend first)", file=sys.stderr)
            return 2
    app = create_app(run_cfg=run_cfg, scene=scn, ui_dir=ui_dir)

    async def _run():
        server = uvicorn.Server(uvicorn.Config(app, host=host, port=port, log_level="info"))
        if args.no_tcp:
            await server.serve()
            return
        tcp_server = await serve_tcp(host, port + 1, run_cfg, scn)
        print(f"TCP carrier on {host}:{port + 1}")
        async with tcp_server:
            await server.serve()

    asyncio.run(_run())
    return 0


COMMANDS = {
    "error-curve": cmd_error_curve,
    "calibrate": cmd_calibrate,
    "render": cmd_render,
    "simulate": cmd_simulate,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return COMMANDS[args.command](args, argv)
    except (ValueError, OSError) as exc:
        print(f"spheroview {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
