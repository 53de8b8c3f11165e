/**
 * WebSocket session against the simulation server.
 *
 * Upstream: PoseMsg at a fixed cadence (default 60 Hz) plus JSON text
 * control ({"r": ...}, {"re_zero": true}, {"stereo": ...}). Downstream:
 * JPEG eye views into latest-value mailboxes (late frames are dropped,
 * never queued) and the robot head pose. Clock offset is estimated from
 * 8 ping/pong exchanges at connect and refreshed periodically.
 */

import { LatestMailbox } from "./mailbox.js";
import type { InputController } from "./input.js";
import {
  clockOffsetNs,
  decodeMessage,
  encodeMessage,
  type FrameMsg,
  type Pose,
} from "./protocol.js";

export interface SessionStats {
  connected: boolean;
  latencyMs: number | null;
  dsMeters: number | null;
  fps: number;
  poseHz: number;
  robotLagMs: number | null;
  stale: boolean;
}

export interface SessionOptions {
  url: string;
  input: InputController;
  poseHz?: number;
  onStats?: (s: SessionStats) => void;
}

export function nowNs(): bigint {
  return BigInt(Math.round(Date.now() * 1e3)) * 1000n;
}

export class ViewerSession {
  readonly frames: Array<LatestMailbox<FrameMsg>> = [new LatestMailbox(), new LatestMailbox()];
  robotPose: Pose | null = null;
  robotPoseNs: bigint | null = null;
  offsetNs = 0;
  connected = false;

  private ws: WebSocket | null = null;
  private poseTimer: number | null = null;
  private clockTimer: number | null = null;
  private backoffMs = 500;
  private exchanges: Array<[bigint, bigint, bigint, bigint]> = [];
  private pingSentNs = new Map<string, bigint>();
  private closed = false;
  private poseSends = 0;
  private poseWindowStart = performance.now();
  poseHzMeasured = 0;

  constructor(private opts: SessionOptions) {}

  connect(): void {
    this.closed = false;
    const ws = new WebSocket(this.opts.url);
    ws.binaryType = "arraybuffer";
    this.ws = ws;
    ws.onopen = () => {
      this.connected = true;
      this.backoffMs = 500;
      this.exchanges = [];
      for (let i = 0; i < 8; i++) {
        this.sendPing();
      }
      this.startPoseLoop();
    };
    ws.onmessage = (ev: MessageEvent) => {
      if (typeof ev.data === "string") {
        return; // server-side control errors; surfaced in the console
      }
      this.handleBinary(new Uint8Array(ev.data as ArrayBuffer));
    };
    ws.onclose = () => {
      this.connected = false;
      this.stopLoops();
      if (!this.closed) {
        setTimeout(() => this.connect(), this.backoffMs);
        this.backoffMs = Math.min(this.backoffMs * 2, 8000);
      }
    };
    ws.onerror = () => ws.close();
  }

  close(): void {
    this.closed = true;
    this.stopLoops();
    this.ws?.close();
  }

  handleBinary(data: Uint8Array): void {
    const msg = decodeMessage(data);
    if (msg.kind === "frame") {
      const slot = msg.cameraId < this.frames.length ? msg.cameraId : 0;
      this.frames[slot].put(msg);
    } else if (msg.kind === "pose") {
      this.robotPose = msg.pose;
      this.robotPoseNs = msg.timestampNs;
    } else if (msg.pong) {
      const t4 = nowNs();
      const t1 = this.pingSentNs.get(msg.t1.toString());
      if (t1 !== undefined) {
        this.pingSentNs.delete(msg.t1.toString());
        this.exchanges.push([t1, msg.t2, msg.t3, t4]);
        if (this.exchanges.length >= 8) {
          this.offsetNs = clockOffsetNs(this.exchanges.slice(-8));
        }
      }
    }
  }

  sendConfig(cfg: { r?: number; re_zero?: boolean; stereo?: boolean }): void {
    if (this.ws && this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(JSON.stringify(cfg));
    }
  }

  /** Pose-to-photon latency of a frame, corrected by the clock offset. */
  frameLatencyMs(frame: FrameMsg): number {
    return Number(nowNs() - frame.captureTimestampNs) / 1e6 - this.offsetNs / 1e6;
  }

  private sendPing(): void {
    const t1 = nowNs();
    this.pingSentNs.set(t1.toString(), t1);
    this.ws?.send(encodeMessage({ kind: "clock", pong: false, t1, t2: 0n, t3: 0n }));
  }

  private startPoseLoop(): void {
    const periodMs = 1000 / (this.opts.poseHz ?? 60);
    let last = performance.now();
    this.poseTimer = setInterval(() => {
      const now = performance.now();
      const dt = (now - last) / 1000;
      last = now;
      this.opts.input.step(dt);
      const pose = this.opts.input.pose();
      if (this.ws && this.ws.readyState === WebSocket.OPEN) {
        this.ws.send(
          encodeMessage({ kind: "pose", timestampNs: nowNs(), frameId: 0, pose })
        );
        this.poseSends++;
        if (now - this.poseWindowStart >= 1000) {
          this.poseHzMeasured = (this.poseSends * 1000) / (now - this.poseWindowStart);
          this.poseSends = 0;
          this.poseWindowStart = now;
        }
      }
    }, periodMs) as unknown as number;
    this.clockTimer = setInterval(() => this.sendPing(), 2000) as unknown as number;
  }

  private stopLoops(): void {
    if (this.poseTimer !== null) {
      clearInterval(this.poseTimer);
      this.poseTimer = null;
    }
    if (this.clockTimer !== null) {
      clearInterval(this.clockTimer);
      this.clockTimer = null;
    }
  }
}
