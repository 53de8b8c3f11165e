/**
 * Minimal quaternion/pose math for the client-side virtual head.
 * Camera axis convention throughout: x right, y down, z forward.
 */

import type { Pose } from "./protocol.js";

export type Quat = [number, number, number, number]; // w, x, y, z
export type Vec3 = [number, number, number];

export const IDENTITY: Pose = { q: [1, 0, 0, 0], t: [0, 0, 0] };

export function quatMul(a: Quat, b: Quat): Quat {
  const [w1, x1, y1, z1] = a;
  const [w2, x2, y2, z2] = b;
  return [
    w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
    w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
    w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
    w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
  ];
}

export function quatFromAxisAngle(axis: Vec3, angle: number): Quat {
  const n = Math.hypot(...axis);
  const h = angle / 2;
  const s = Math.sin(h) / n;
  return [Math.cos(h), axis[0] * s, axis[1] * s, axis[2] * s];
}

export function rotateVec(q: Quat, v: Vec3): Vec3 {
  const [w, x, y, z] = q;
  // v' = v + 2*cross(q.xyz, cross(q.xyz, v) + w*v)
  const cx = y * v[2] - z * v[1] + w * v[0];
  const cy = z * v[0] - x * v[2] + w * v[1];
  const cz = x * v[1] - y * v[0] + w * v[2];
  return [
    v[0] + 2 * (y * cz - z * cy),
    v[1] + 2 * (z * cx - x * cz),
    v[2] + 2 * (x * cy - y * cx),
  ];
}

export function compose(a: Pose, b: Pose): Pose {
  const r = rotateVec(a.q as Quat, b.t as Vec3);
  return {
    q: quatMul(a.q as Quat, b.q as Quat),
    t: [a.t[0] + r[0], a.t[1] + r[1], a.t[2] + r[2]],
  };
}

/** Head orientation from yaw/pitch. Up is -y (camera convention), so a
 *  positive yaw turns the gaze left; pitch rotates about the local x
 *  axis and positive pitch looks up. */
export function headOrientation(yaw: number, pitch: number): Quat {
  const qYaw = quatFromAxisAngle([0, -1, 0], yaw);
  const qPitch = quatFromAxisAngle([1, 0, 0], pitch);
  return quatMul(qYaw, qPitch);
}

export function distance(a: Vec3, b: Vec3): number {
  return Math.hypot(a[0] - b[0], a[1] - b[1], a[2] - b[2]);
}
