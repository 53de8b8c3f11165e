/**
 * Wire protocol shared with the simulation server.
 *
 * Framing (little-endian): magic 0x53 0x56 ("SV"), u8 message type,
 * u32 payload length, payload. One framed message per WebSocket binary
 * frame. Nanosecond timestamps exceed 2^53, so all u64 fields are
 * BigInt.
 */

export const MAGIC0 = 0x53;
export const MAGIC1 = 0x56;
export const HEADER_SIZE = 7;
export const MAX_PAYLOAD = 64 * 1024 * 1024;

export const TYPE_FRAME = 1;
export const TYPE_POSE = 2;
export const TYPE_CLOCK_PING = 3;
export const TYPE_CLOCK_PONG = 4;

export const ENC_RAW_RGB8 = 0;
export const ENC_JPEG = 1;

export interface Pose {
  q: [number, number, number, number]; // w, x, y, z
  t: [number, number, number];
}

export interface FrameMsg {
  kind: "frame";
  captureTimestampNs: bigint;
  cameraId: number;
  encoding: number;
  width: number;
  height: number;
  payload: Uint8Array;
}

export interface PoseMsg {
  kind: "pose";
  timestampNs: bigint;
  frameId: number;
  pose: Pose;
}

export interface ClockMsg {
  kind: "clock";
  pong: boolean;
  t1: bigint;
  t2: bigint;
  t3: bigint;
}

export type Message = FrameMsg | PoseMsg | ClockMsg;

export class FramingError extends Error {}

const FRAME_HEAD_SIZE = 8 + 1 + 1 + 2 + 2;
const POSE_BODY_SIZE = 8 + 1 + 7 * 8;
const CLOCK_BODY_SIZE = 3 * 8;

export function encodeMessage(msg: Message): Uint8Array {
  let body: Uint8Array;
  let type: number;
  if (msg.kind === "frame") {
    body = new Uint8Array(FRAME_HEAD_SIZE + msg.payload.length);
    const dv = new DataView(body.buffer);
    dv.setBigUint64(0, msg.captureTimestampNs, true);
    dv.setUint8(8, msg.cameraId);
    dv.setUint8(9, msg.encoding);
    dv.setUint16(10, msg.width, true);
    dv.setUint16(12, msg.height, true);
    body.set(msg.payload, FRAME_HEAD_SIZE);
    type = TYPE_FRAME;
  } else if (msg.kind === "pose") {
    body = new Uint8Array(POSE_BODY_SIZE);
    const dv = new DataView(body.buffer);
    dv.setBigUint64(0, msg.timestampNs, true);
    dv.setUint8(8, msg.frameId);
    const vals = [...msg.pose.q, ...msg.pose.t];
    vals.forEach((v, i) => dv.setFloat64(9 + 8 * i, v, true));
    type = TYPE_POSE;
  } else {
    body = new Uint8Array(CLOCK_BODY_SIZE);
    const dv = new DataView(body.buffer);
    dv.setBigUint64(0, msg.t1, true);
    dv.setBigUint64(8, msg.t2, true);
    dv.setBigUint64(16, msg.t3, true);
    type = msg.pong ? TYPE_CLOCK_PONG : TYPE_CLOCK_PING;
  }
  if (body.length > MAX_PAYLOAD) {
    throw new FramingError(`payload ${body.length} exceeds ${MAX_PAYLOAD}`);
  }
  const out = new Uint8Array(HEADER_SIZE + body.length);
  const dv = new DataView(out.buffer);
  dv.setUint8(0, MAGIC0);
  dv.setUint8(1, MAGIC1);
  dv.setUint8(2, type);
  dv.setUint32(3, body.length, true);
  out.set(body, HEADER_SIZE);
  return out;
}

export function decodeMessage(data: Uint8Array): Message {
  if (data.length < HEADER_SIZE) {
    throw new FramingError("short buffer");
  }
  const dv = new DataView(data.buffer, data.byteOffset, data.byteLength);
  if (dv.getUint8(0) !== MAGIC0 || dv.getUint8(1) !== MAGIC1) {
    throw new FramingError("bad magic");
  }
  const type = dv.getUint8(2);
  const length = dv.getUint32(3, true);
  if (length > MAX_PAYLOAD) {
    throw new FramingError("oversized payload");
  }
  if (data.length !== HEADER_SIZE + length) {
    throw new FramingError("length mismatch");
  }
  const body = new DataView(data.buffer, data.byteOffset + HEADER_SIZE, length);
  if (type === TYPE_FRAME) {
    if (length < FRAME_HEAD_SIZE) {
      throw new FramingError("frame message truncated");
    }
    return {
      kind: "frame",
      captureTimestampNs: body.getBigUint64(0, true),
      cameraId: body.getUint8(8),
      encoding: body.getUint8(9),
      width: body.getUint16(10, true),
      height: body.getUint16(12, true),
      payload: data.slice(HEADER_SIZE + FRAME_HEAD_SIZE),
    };
  }
  if (type === TYPE_POSE) {
    if (length !== POSE_BODY_SIZE) {
      throw new FramingError("pose message has wrong size");
    }
    const f = (i: number) => body.getFloat64(9 + 8 * i, true);
    return {
      kind: "pose",
      timestampNs: body.getBigUint64(0, true),
      frameId: body.getUint8(8),
      pose: { q: [f(0), f(1), f(2), f(3)], t: [f(4), f(5), f(6)] },
    };
  }
  if (type === TYPE_CLOCK_PING || type === TYPE_CLOCK_PONG) {
    if (length !== CLOCK_BODY_SIZE) {
      throw new FramingError("clock message has wrong size");
    }
    return {
      kind: "clock",
      pong: type === TYPE_CLOCK_PONG,
      t1: body.getBigUint64(0, true),
      t2: body.getBigUint64(8, true),
      t3: body.getBigUint64(16, true),
    };
  }
  throw new FramingError(`unknown message type ${type}`);
}

/** Median NTP offset estimate over (t1, t2, t3, t4) exchanges, ns.
 *  Positive: the peer clock runs ahead of ours. */
export function clockOffsetNs(exchanges: Array<[bigint, bigint, bigint, bigint]>): number {
  if (exchanges.length === 0) {
    throw new Error("no clock exchanges");
  }
  const estimates = exchanges
    .map(([t1, t2, t3, t4]) => (Number(t2 - t1) + Number(t3 - t4)) / 2)
    .sort((a, b) => a - b);
  const mid = Math.floor(estimates.length / 2);
  return estimates.length % 2 === 1 ? estimates[mid] : (estimates[mid - 1] + estimates[mid]) / 2;
}

export function hexToBytes(hex: string): Uint8Array {
  const out = new Uint8Array(hex.length / 2);
  for (let i = 0; i < out.length; i++) {
    out[i] = parseInt(hex.slice(2 * i, 2 * i + 2), 16);
  }
  return out;
}

export function bytesToHex(data: Uint8Array): string {
  return Array.from(data, (b) => b.toString(16).padStart(2, "0")).join("");
}
