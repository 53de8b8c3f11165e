"""Timestamped pose/frame streaming: wire framing, interpolated pose
lookup, clock-offset estimation and pose-to-photon latency accounting.

Wire format (little-endian): magic 0x53 0x56 ('SV'), u8 message type,
u32 payload length, payload. One framed message per WebSocket binary
frame; over TCP the same bytes form a self-synchronizing stream (a
corrupted prefix is skipped up to the next magic).

Message payloads:

- Frame (type 1): u64 capture_timestamp_ns, u8 camera_id, u8 encoding
  (0=RAW_RGB8, 1=JPEG), u16 width, u16 height, image bytes.
- Pose (type 2): u64 timestamp_ns, u8 frame_id, 7 f64 (qw qx qy qz tx ty tz).
- ClockPing/ClockPong (types 3/4): u64 t1, t2, t3.
"""

from __future__ import annotations

import statistics
import struct
import threading
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .geom import Pose, interpolate

MAGIC = b"\x53\x56"
HEADER = struct.Struct("<2sBI")
MAX_PAYLOAD = 64 * 1024 * 1024

TYPE_FRAME = 1
TYPE_POSE = 2
TYPE_CLOCK_PING = 3
TYPE_CLOCK_PONG = 4

ENC_RAW_RGB8 = 0
ENC_JPEG = 1

_FRAME_HEAD = struct.Struct("<QBBHH")
_POSE_BODY = struct.Struct("<QB7d")
_CLOCK_BODY = struct.Struct("<3Q")


class FramingError(ValueError):
    pass


@dataclass(frozen=True)
class FrameMsg:
    capture_timestamp_ns: int
    camera_id: int
    encoding: int
    width: int
    height: int
    payload: bytes

    def __post_init__(self):
        if self.encoding == ENC_RAW_RGB8 and len(self.payload) != self.width * self.height * 3:
            raise ValueError(
                f"RAW_RGB8 payload length {len(self.payload)} != "
                f"{self.width}x{self.height}x3"
            )


@dataclass(frozen=True)
class PoseMsg:
    timestamp_ns: int
    frame_id: int
    pose: Pose


@dataclass(frozen=True)
class ClockMsg:
    t1: int
    t2: int = 0
    t3: int = 0
    pong: bool = False


Message = FrameMsg | PoseMsg | ClockMsg


def encode_message(msg: Message) -> bytes:
    if isinstance(msg, FrameMsg):
        body = _FRAME_HEAD.pack(
            msg.capture_timestamp_ns, msg.camera_id, msg.encoding, msg.width, msg.height
        ) + msg.payload
        mtype = TYPE_FRAME
    elif isinstance(msg, PoseMsg):
        q, t = msg.pose.q, msg.pose.t
        body = _POSE_BODY.pack(msg.timestamp_ns, msg.frame_id, q[0], q[1], q[2], q[3], t[0], t[1], t[2])
        mtype = TYPE_POSE
    elif isinstance(msg, ClockMsg):
        body = _CLOCK_BODY.pack(msg.t1, msg.t2, msg.t3)
        mtype = TYPE_CLOCK_PONG if msg.pong else TYPE_CLOCK_PING
    else:
        raise TypeError(f"not a transport message: {type(msg)!r}")
    if len(body) > MAX_PAYLOAD:
        raise FramingError(f"payload {len(body)} exceeds {MAX_PAYLOAD} bytes")
    return HEADER.pack(MAGIC, mtype, len(body)) + body


def _decode_body(mtype: int, body: bytes) -> Message:
    if mtype == TYPE_FRAME:
        if len(body) < _FRAME_HEAD.size:
            raise FramingError("frame message truncated")
        stamp, cam_id, enc, w, h = _FRAME_HEAD.unpack_from(body)
        return FrameMsg(stamp, cam_id, enc, w, h, body[_FRAME_HEAD.size :])
    if mtype == TYPE_POSE:
        if len(body) != _POSE_BODY.size:
            raise FramingError("pose message has wrong size")
        stamp, frame_id, qw, qx, qy, qz, tx, ty, tz = _POSE_BODY.unpack(body)
        return PoseMsg(stamp, frame_id, Pose([qw, qx, qy, qz], [tx, ty, tz]))
    if mtype in (TYPE_CLOCK_PING, TYPE_CLOCK_PONG):
        if len(body) != _CLOCK_BODY.size:
            raise FramingError("clock message has wrong size")
        t1, t2, t3 = _CLOCK_BODY.unpack(body)
        return ClockMsg(t1, t2, t3, pong=(mtype == TYPE_CLOCK_PONG))
    raise FramingError(f"unknown message type {mtype}")


def decode_message(data: bytes) -> Message:
    """Decode exactly one framed message (e.g. a WebSocket binary frame)."""
    if len(data) < HEADER.size:
        raise FramingError("short buffer")
    magic, mtype, length = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FramingError("bad magic")
    if length > MAX_PAYLOAD:
        raise FramingError("oversized payload")
    if len(data) != HEADER.size + length:
        raise FramingError("length mismatch")
    return _decode_body(mtype, data[HEADER.size :])


class StreamDecoder:
    """Incremental decoder for a TCP byte stream. Feed arbitrary chunks;
    desynchronized input is skipped up to the next magic."""

    def __init__(self):
        self._buf = bytearray()
        self.errors = 0

    def feed(self, data: bytes) -> list[Message]:
        self._buf.extend(data)
        out: list[Message] = []
        while True:
            idx = self._buf.find(MAGIC)
            if idx < 0:
                # no magic: keep at most one byte (a possible split magic)
                if len(self._buf) > 1:
                    self.errors += len(self._buf) - 1
                    del self._buf[:-1]
                break
            if idx > 0:
                self.errors += idx
                del self._buf[:idx]
            if len(self._buf) < HEADER.size:
                break
            _magic, mtype, length = HEADER.unpack_from(self._buf)
            if length > MAX_PAYLOAD:
                self.errors += 1
                del self._buf[:2]  # resync past this magic
                continue
            if len(self._buf) < HEADER.size + length:
                break
            body = bytes(self._buf[HEADER.size : HEADER.size + length])
            try:
                msg = _decode_body(mtype, body)
            except FramingError:
                self.errors += 1
                del self._buf[:2]
                continue
            del self._buf[: HEADER.size + length]
            out.append(msg)
        return out


class TimedPoseBuffer:
    """Bounded, time-ordered pose history with interpolated lookup.

    One writer, many readers; the writer holds the lock only for one
    append. Lookups between stored stamps interpolate; outside the span
    they clamp to the nearest entry and flag extrapolation.
    """

    def __init__(self, capacity: int = 1024, frame_id: int = 0):
        if capacity < 2:
            raise ValueError("capacity must be >= 2")
        self.capacity = capacity
        self.frame_id = frame_id
        self._stamps: list[int] = []
        self._poses: list[Pose] = []
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._stamps)

    @property
    def newest_stamp(self) -> int | None:
        return self._stamps[-1] if self._stamps else None

    def push(self, timestamp_ns: int, pose: Pose) -> None:
        with self._lock:
            if self._stamps and timestamp_ns <= self._stamps[-1]:
                raise ValueError(
                    f"timestamps must be strictly increasing: {timestamp_ns} <= {self._stamps[-1]}"
                )
            self._stamps.append(timestamp_ns)
            self._poses.append(pose)
            if len(self._stamps) > self.capacity:
                del self._stamps[0]
                del self._poses[0]

    def lookup(self, timestamp_ns: int) -> tuple[Pose, bool]:
        """(pose, extrapolated). Raises on an empty buffer."""
        with self._lock:
            stamps = list(self._stamps)
            poses = list(self._poses)
        if not stamps:
            raise ValueError("lookup on empty pose buffer")
        if timestamp_ns <= stamps[0]:
            return poses[0], timestamp_ns < stamps[0]
        if timestamp_ns >= stamps[-1]:
            return poses[-1], timestamp_ns > stamps[-1]
        i = bisect_right(stamps, timestamp_ns) - 1
        if stamps[i] == timestamp_ns:
            return poses[i], False
        s = (timestamp_ns - stamps[i]) / (stamps[i + 1] - stamps[i])
        return interpolate(poses[i], poses[i + 1], s), False


def clock_offset_from_exchanges(exchanges: list[tuple[int, int, int, int]]) -> float:
    """Median NTP offset estimate over (t1, t2, t3, t4) tuples, ns.
    Positive offset: the peer clock runs ahead of ours."""
    if not exchanges:
        raise ValueError("no clock exchanges")
    estimates = [((t2 - t1) + (t3 - t4)) / 2.0 for t1, t2, t3, t4 in exchanges]
    return float(statistics.median(estimates))


def measure_clock_offset(exchange, k: int = 8) -> float:
    """Run ``k`` ping/pong exchanges through ``exchange(t1) -> (t2, t3, t4)``
    and return the median offset in ns."""
    samples = []
    t1 = 0
    for _ in range(k):
        t2, t3, t4 = exchange(t1)
        samples.append((t1, t2, t3, t4))
        t1 = t4 + 1
    return clock_offset_from_exchanges(samples)


@dataclass
class LatencyReport:
    """Pose-to-photon latency accounting with clock correction.

    Latencies are display - capture - offset; negative values after the
    correction are clock anomalies and excluded from the summary."""

    offset_ns: float = 0.0
    latencies_s: list[float] = field(default_factory=list)
    anomalies: int = 0

    def add(self, capture_stamp_ns: int, display_stamp_ns: int) -> float | None:
        latency_ns = display_stamp_ns - capture_stamp_ns - self.offset_ns
        if latency_ns < 0:
            self.anomalies += 1
            return None
        latency = latency_ns * 1e-9
        self.latencies_s.append(latency)
        return latency

    @property
    def mean(self) -> float:
        if not self.latencies_s:
            raise ValueError("no latency samples")
        return float(np.mean(self.latencies_s))

    @property
    def p95(self) -> float:
        if not self.latencies_s:
            raise ValueError("no latency samples")
        return float(np.percentile(self.latencies_s, 95))

    def summary(self) -> dict:
        return {
            "count": len(self.latencies_s),
            "mean_s": self.mean,
            "p95_s": self.p95,
            "anomalies": self.anomalies,
        }
