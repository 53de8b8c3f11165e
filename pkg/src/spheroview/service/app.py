"""FastAPI application: batch operations over HTTP, live sessions over
WebSocket, optional static viewer assets."""

from __future__ import annotations

import asyncio
import time
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .. import __version__, camera, scene as scenemod
from ..config import RunConfig
from . import models as m, ops
from .session import LiveSession


def create_app(
    run_cfg: RunConfig | None = None,
    scene: scenemod.Scene | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    run_cfg = run_cfg or RunConfig()
    app = FastAPI(title="spheroview", version=__version__)

    @app.exception_handler(ValueError)
    async def _value_error(_request, exc: ValueError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "version": __version__}

    @app.get("/api/rig/default", response_model=m.RigModel)
    def rig_default():
        return m.RigModel.from_rig(camera.default_rig())

    @app.post("/api/error-curve", response_model=m.ErrorCurveResponse)
    def error_curve(req: m.ErrorCurveRequest):
        return ops.run_error_curve(req)

    @app.post("/api/calibrate", response_model=m.CalibrateResponse)
    def calibrate(req: m.CalibrateRequest):
        return ops.run_calibrate(req)

    @app.post("/api/render", response_model=m.RenderResponse)
    def render_frame(req: m.RenderRequest):
        return ops.run_render(req)

    @app.post("/api/simulate", response_model=m.SimulateResponse)
    def simulate(req: m.SimulateRequest):
        return ops.run_simulate(req)

    @app.websocket("/ws")
    async def ws_session(ws: WebSocket):
        await ws.accept()
        session = LiveSession(run_cfg=run_cfg, scene=scene)
        frame_period = 1.0 / run_cfg.serve.frame_hz

        async def receiver():
            while True:
                msg = await ws.receive()
                if msg.get("type") == "websocket.disconnect":
                    raise WebSocketDisconnect(msg.get("code") or 1000)
                now = time.time_ns()
                if msg.get("bytes") is not None:
                    for reply in session.handle_binary(msg["bytes"], now):
                        await ws.send_bytes(reply)
                elif msg.get("text") is not None:
                    try:
                        session.handle_text(msg["text"], now)
                    except (ValueError, KeyError) as exc:
                        await ws.send_text(f'{{"error": "{exc}"}}')

        async def sender():
            while True:
                t0 = time.perf_counter()
                for data in session.tick_bytes(time.time_ns()):
                    await ws.send_bytes(data)
                elapsed = time.perf_counter() - t0
                await asyncio.sleep(max(frame_period - elapsed, 0.001))

        recv_task = asyncio.create_task(receiver())
        send_task = asyncio.create_task(sender())
        try:
            done, pending = await asyncio.wait(
                {recv_task, send_task}, return_when=asyncio.FIRST_EXCEPTION
            )
            for task in pending:
                task.cancel()
            for task in done:
                exc = task.exception()
                if exc is not None and not isinstance(exc, WebSocketDisconnect):
                    raise exc
        finally:
            recv_task.cancel()
            send_task.cancel()

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
