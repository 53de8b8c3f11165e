"""JIT-compiled reprojection kernel.

Two phases per output row: a branch-light geometry pass (ray rotation,
sphere intersection, double-sphere projection) that the compiler can
vectorize, then a scalar bilinear sampling pass. Every pixel is
independent and fastmath stays off, so output bytes do not depend on the
thread count. Falls back to the vectorized numpy path in render.py when
numba is unavailable.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def deco(f):
            return f

        return deco

    prange = range


@njit(parallel=True, cache=True, fastmath=False)
def reproject_kernel(
    rays: np.ndarray,        # (H, W, 3) float32 unit eye rays
    frame: np.ndarray,       # (SH, SW, 3) uint8 source
    out: np.ndarray,         # (H, W, 3) uint8 target
    rot: np.ndarray,         # (3, 3) float32 eye->camera rotation
    origin: np.ndarray,      # (3,) float32 eye position in camera frame
    c0: np.float32,          # |origin|^2 - r^2 (negative: eye inside sphere)
    fx: np.float32, fy: np.float32, cx: np.float32, cy: np.float32,
    xi: np.float32, alpha: np.float32, w2: np.float32,
    bg0: np.uint8, bg1: np.uint8, bg2: np.uint8,
) -> None:
    h, w = out.shape[0], out.shape[1]
    src_h, src_w = frame.shape[0], frame.shape[1]
    one = np.float32(1.0)
    zero = np.float32(0.0)
    beta = one - alpha
    ox, oy, oz = origin[0], origin[1], origin[2]
    umax = np.float32(src_w - 1)
    vmax = np.float32(src_h - 1)
    for y in prange(h):
        us = np.empty(w, dtype=np.float32)
        vs = np.empty(w, dtype=np.float32)
        for x in range(w):
            rx = rays[y, x, 0]
            ry = rays[y, x, 1]
            rz = rays[y, x, 2]
            dx = rot[0, 0] * rx + rot[0, 1] * ry + rot[0, 2] * rz
            dy = rot[1, 0] * rx + rot[1, 1] * ry + rot[1, 2] * rz
            dz = rot[2, 0] * rx + rot[2, 1] * ry + rot[2, 2] * rz
            b = dx * ox + dy * oy + dz * oz
            t = np.float32(np.sqrt(b * b - c0)) - b
            px = ox + t * dx
            py = oy + t * dy
            pz = oz + t * dz
            r2 = px * px + py * py
            d1 = np.float32(np.sqrt(r2 + pz * pz))
            zeta = xi * d1 + pz
            d2 = np.float32(np.sqrt(r2 + zeta * zeta))
            denom = alpha * d2 + beta * zeta
            ok = (pz > -w2 * d1) and (denom > np.float32(1e-9))
            inv = one / denom
            u = fx * px * inv + cx
            v = fy * py * inv + cy
            if not (ok and u >= zero and u <= umax and v >= zero and v <= vmax):
                u = np.float32(-1.0)
            us[x] = u
            vs[x] = v
        for x in range(w):
            u = us[x]
            if u < zero:
                out[y, x, 0] = bg0
                out[y, x, 1] = bg1
                out[y, x, 2] = bg2
                continue
            v = vs[x]
            u0 = int(u)
            v0 = int(v)
            fu = u - np.float32(u0)
            fv = v - np.float32(v0)
            u1 = min(u0 + 1, src_w - 1)
            v1 = min(v0 + 1, src_h - 1)
            for c in range(3):
                c00 = np.float32(frame[v0, u0, c])
                c01 = np.float32(frame[v0, u1, c])
                c10 = np.float32(frame[v1, u0, c])
                c11 = np.float32(frame[v1, u1, c])
                top = c00 + fu * (c01 - c00)
                bot = c10 + fu * (c11 - c10)
                out[y, x, c] = np.uint8(np.rint(top + fv * (bot - top)))
