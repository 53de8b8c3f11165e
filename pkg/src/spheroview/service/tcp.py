"""Raw TCP carrier: the same framed messages as the WebSocket, as a
self-synchronizing byte stream."""

from __future__ import annotations

import asyncio
import time

from .. import scene as scenemod
from ..config import RunConfig
from ..transport import StreamDecoder, encode_message
from .session import LiveSession


async def handle_connection(reader, writer, run_cfg: RunConfig, scene) -> None:
    session = LiveSession(run_cfg=run_cfg, scene=scene)
    decoder = StreamDecoder()
    frame_period = 1.0 / run_cfg.serve.frame_hz
    stop = asyncio.Event()

    async def receiver():
        try:
            while not stop.is_set():
                data = await reader.read(65536)
                if not data:
                    break
                now = time.time_ns()
                for msg in decoder.feed(data):
                    for reply in session.handle_message(msg, now):
                        writer.write(encode_message(reply))
                await writer.drain()
        finally:
            stop.set()

    async def sender():
        try:
            while not stop.is_set():
                t0 = time.perf_counter()
                for msg in session.tick(time.time_ns()):
                    writer.write(encode_message(msg))
                await writer.drain()
                elapsed = time.perf_counter() - t0
                await asyncio.sleep(max(frame_period - elapsed, 0.001))
        finally:
            stop.set()

    try:
        await asyncio.gather(receiver(), sender())
    except (ConnectionResetError, BrokenPipeError):
        pass
    finally:
        writer.close()


async def serve_tcp(host: str, port: int, run_cfg: RunConfig, scene: scenemod.Scene | None = None):
    server = await asyncio.start_server(
        lambda r, w: handle_connection(r, w, run_cfg, scene), host, port
    )
    return server
