/**
 * Pointer + keyboard model of the virtual head.
 *
 * Dragging the full viewport width yaws by -90 deg (drag right looks
 * right); vertical drags pitch, clamped short of straight up/down.
 * WASD translates in the head frame (W forward along the gaze), R/F
 * up/down, at `speed` m/s. KeyZ re-zeros (captures a new nominal pose
 * on the server).
 */

import { headOrientation, rotateVec, type Vec3 } from "./pose.js";
import type { Pose } from "./protocol.js";

const FULL_DRAG_YAW = Math.PI / 2;
const PITCH_LIMIT = Math.PI / 2 - 0.05;

export class InputController {
  yaw = 0;
  pitch = 0;
  position: Vec3 = [0, 0, 0];
  speed = 0.5; // m/s
  private pressed = new Set<string>();

  keyDown(code: string): void {
    this.pressed.add(code);
  }

  keyUp(code: string): void {
    this.pressed.delete(code);
  }

  clearKeys(): void {
    this.pressed.clear();
  }

  /** Pointer drag in pixels relative to the viewport size. */
  drag(dxPx: number, dyPx: number, viewportW: number, viewportH: number): void {
    this.yaw -= (dxPx / viewportW) * FULL_DRAG_YAW;
    this.pitch -= (dyPx / viewportH) * FULL_DRAG_YAW;
    this.pitch = Math.min(PITCH_LIMIT, Math.max(-PITCH_LIMIT, this.pitch));
  }

  /** Integrate held keys over dt seconds (head-frame translation). */
  step(dt: number): void {
    const local: Vec3 = [0, 0, 0];
    if (this.pressed.has("KeyW")) local[2] += 1;
    if (this.pressed.has("KeyS")) local[2] -= 1;
    if (this.pressed.has("KeyD")) local[0] += 1;
    if (this.pressed.has("KeyA")) local[0] -= 1;
    if (this.pressed.has("KeyF")) local[1] += 1; // y points down
    if (this.pressed.has("KeyR")) local[1] -= 1;
    const norm = Math.hypot(...local);
    if (norm === 0) return;
    const q = headOrientation(this.yaw, this.pitch);
    const world = rotateVec(q, [
      (local[0] / norm) * this.speed * dt,
      (local[1] / norm) * this.speed * dt,
      (local[2] / norm) * this.speed * dt,
    ]);
    this.position = [
      this.position[0] + world[0],
      this.position[1] + world[1],
      this.position[2] + world[2],
    ];
  }

  pose(): Pose {
    return { q: headOrientation(this.yaw, this.pitch), t: [...this.position] };
  }
}
