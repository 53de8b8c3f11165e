import numpy as np

from spheroview.geom import Pose
from spheroview.transport import ClockMsg, ENC_JPEG, ENC_RAW_RGB8, FrameMsg, PoseMsg


def conformance_messages():
    """Canonical wire-format fixtures shared with the browser viewer.

    Field values are chosen so no float renormalizes on decode (the
    quaternion below is exactly unit in binary64 within 1e-12)."""
    return [
        ("clock_ping", ClockMsg(t1=1111111111111111)),
        ("clock_pong", ClockMsg(t1=1111111111111111, t2=2222222222222222, t3=3333333333333333, pong=True)),
        (
            "pose_identity",
            PoseMsg(timestamp_ns=1_700_000_000_123_456_789, frame_id=0, pose=Pose()),
        ),
        (
            "pose_generic",
            PoseMsg(
                timestamp_ns=987_654_321_000,
                frame_id=1,
                pose=Pose(np.array([0.8, 0.2, -0.4, 0.4]), np.array([0.1, -0.25, 1.5])),
            ),
        ),
        (
            "frame_raw_2x2",
            FrameMsg(
                capture_timestamp_ns=42,
                camera_id=0,
                encoding=ENC_RAW_RGB8,
                width=2,
                height=2,
                payload=bytes(range(12)),
            ),
        ),
        (
            "frame_jpeg_stub",
            FrameMsg(
                capture_timestamp_ns=1_234_567_890_123,
                camera_id=1,
                encoding=ENC_JPEG,
                width=512,
                height=512,
                payload=b"\xff\xd8fake jpeg body\xff\xd9",
            ),
        ),
    ]
