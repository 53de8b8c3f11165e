"""Hand-eye calibration from paired robot poses and pixel detections.

Estimates three fixed transforms from timestamped samples:

- ``t_cam``   camera pose in the head flange frame
- ``t_mount`` arm base pose in the head base frame
- ``t_mark``  marker pose in the wrist flange frame

The marker is a single 3D point (the frame origin), so its orientation
never enters the residual; the solver estimates its translation only and
leaves the orientation at the initial value.

The predicted detection of a sample is

    p_left  = project_left( inv(t_cam) * inv(t_head) * t_mount * t_arm * t_mark * origin )
    p_right = project_right( inv(t_l_r) * <same point in the left frame> )

and the estimate minimizes the summed squared pixel error with a damped
Gauss-Newton (Levenberg-Marquardt) loop. Jacobians are central finite
differences over the 15 effective coordinates (two 6-twists + marker
translation), step 1e-6.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import camera as cam
from .camera import StereoRig
from .geom import Pose, compose, exp, inverse

FD_STEP = 1e-6
PARAM_NAMES = [
    "t_cam rotation x", "t_cam rotation y", "t_cam rotation z",
    "t_cam translation x", "t_cam translation y", "t_cam translation z",
    "t_mount rotation x", "t_mount rotation y", "t_mount rotation z",
    "t_mount translation x", "t_mount translation y", "t_mount translation z",
    "t_mark translation x", "t_mark translation y", "t_mark translation z",
]


@dataclass(frozen=True)
class CalibSample:
    t_head: Pose
    t_arm: Pose
    px_left: np.ndarray
    px_right: np.ndarray
    valid_left: bool = True
    valid_right: bool = True

    def __post_init__(self):
        object.__setattr__(self, "px_left", np.asarray(self.px_left, dtype=float).reshape(2))
        object.__setattr__(self, "px_right", np.asarray(self.px_right, dtype=float).reshape(2))
        if not (self.valid_left or self.valid_right):
            raise ValueError("sample must have at least one valid side")

    def to_json(self) -> dict:
        return {
            "t_head": self.t_head.to_json(),
            "t_arm": self.t_arm.to_json(),
            "px_left": [float(v) for v in self.px_left],
            "px_right": [float(v) for v in self.px_right],
        }

    @classmethod
    def from_json(cls, d: dict) -> "CalibSample":
        return cls(
            t_head=Pose.from_json(d["t_head"]),
            t_arm=Pose.from_json(d["t_arm"]),
            px_left=np.asarray(d["px_left"], dtype=float),
            px_right=np.asarray(d["px_right"], dtype=float),
        )


@dataclass(frozen=True)
class CalibEstimate:
    """Solver result. ``rms_px`` is the per-component rms residual,
    sqrt(E / (2 * number of valid sides))."""

    t_cam: Pose
    t_mount: Pose
    t_mark: Pose
    rms_px: float
    iterations: int
    converged: bool

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "t_cam": self.t_cam.to_json(),
            "t_mount": self.t_mount.to_json(),
            "t_mark": self.t_mark.to_json(),
            "rms_px": self.rms_px,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def marker_point_in_left(
    t_cam: Pose, t_mount: Pose, t_mark: Pose, sample: CalibSample
) -> np.ndarray:
    """Marker origin expressed in the left camera frame."""
    chain = compose(
        inverse(t_cam),
        compose(inverse(sample.t_head), compose(t_mount, compose(sample.t_arm, t_mark))),
    )
    return chain.apply(np.zeros(3))


def predict_pixels(t_cam: Pose, t_mount: Pose, t_mark: Pose, sample: CalibSample, rig: StereoRig):
    """Predicted detections for one sample: (p_left, p_right, valid_l, valid_r)."""
    p_left = marker_point_in_left(t_cam, t_mount, t_mark, sample)
    p_right = inverse(rig.t_l_r).apply(p_left)
    uv_l, ok_l = cam.project(p_left, rig.left)
    uv_r, ok_r = cam.project(p_right, rig.right)
    ok_l = ok_l and 0 <= uv_l[0] <= rig.left.width and 0 <= uv_l[1] <= rig.left.height
    ok_r = ok_r and 0 <= uv_r[0] <= rig.right.width and 0 <= uv_r[1] <= rig.right.height
    return uv_l, uv_r, ok_l, ok_r


class _Stacked:
    """Per-sample transforms flattened to arrays for vectorized residuals."""

    def __init__(self, samples: list[CalibSample], rig: StereoRig):
        n = len(samples)
        self.r_head_inv = np.empty((n, 3, 3))
        self.t_head_inv = np.empty((n, 3))
        self.r_arm = np.empty((n, 3, 3))
        self.t_arm = np.empty((n, 3))
        self.px = np.empty((n, 2, 2))
        self.side_valid = np.empty((n, 2), dtype=bool)
        for i, s in enumerate(samples):
            hi = inverse(s.t_head)
            self.r_head_inv[i] = hi.rotation_matrix
            self.t_head_inv[i] = hi.t
            self.r_arm[i] = s.t_arm.rotation_matrix
            self.t_arm[i] = s.t_arm.t
            self.px[i, 0] = s.px_left
            self.px[i, 1] = s.px_right
            self.side_valid[i] = (s.valid_left, s.valid_right)
        self.rig = rig
        t_r_l = inverse(rig.t_l_r)
        self.r_rl = t_r_l.rotation_matrix
        self.t_rl = t_r_l.t

    def predict(self, t_cam: Pose, t_mount: Pose, t_mark_t: np.ndarray):
        """Pixels (n,2,2) and predicted-validity (n,2) for all samples."""
        ci = inverse(t_cam)
        r_mount, t_mount_t = t_mount.rotation_matrix, t_mount.t
        # marker -> arm base -> head base -> head flange -> camera
        p = np.einsum("nij,j->ni", self.r_arm, t_mark_t) + self.t_arm
        p = p @ r_mount.T + t_mount_t
        p = np.einsum("nij,nj->ni", self.r_head_inv, p) + self.t_head_inv
        p_l = p @ ci.rotation_matrix.T + ci.t
        p_r = p_l @ self.r_rl.T + self.t_rl
        uv_l, ok_l = cam.project_batch(p_l, self.rig.left)
        uv_r, ok_r = cam.project_batch(p_r, self.rig.right)
        uv = np.stack([uv_l, uv_r], axis=1)
        ok = np.stack([ok_l, ok_r], axis=1)
        return uv, ok

    def residuals(self, t_cam: Pose, t_mount: Pose, t_mark_t: np.ndarray) -> np.ndarray:
        """Flat residual vector over valid sides, in a fixed sample order.
        Sides whose prediction leaves the valid domain contribute zero
        (they re-enter as the solution approaches the data)."""
        uv, ok = self.predict(t_cam, t_mount, t_mark_t)
        res = uv - self.px
        res[~(ok & self.side_valid)] = 0.0
        return res[self.side_valid].ravel()


def cost(t_cam: Pose, t_mount: Pose, t_mark: Pose, samples: list[CalibSample], rig: StereoRig) -> float:
    """Summed squared pixel error over all valid sides."""
    if not samples:
        raise ValueError("cost requires at least one sample")
    st = _Stacked(samples, rig)
    r = st.residuals(t_cam, t_mount, t_mark.t)
    return float(r @ r)


def _apply_delta(t_cam: Pose, t_mount: Pose, t_mark: Pose, delta: np.ndarray):
    return (
        compose(exp(delta[0:6]), t_cam),
        compose(exp(delta[6:12]), t_mount),
        Pose(t_mark.q, t_mark.t + delta[12:15]),
    )


def solve(
    samples: list[CalibSample],
    rig: StereoRig,
    init: tuple[Pose, Pose, Pose],
    max_iterations: int = 100,
    allow_single_side: bool = False,
) -> CalibEstimate:
    """Levenberg-Marquardt estimation of (t_cam, t_mount, t_mark).

    Damping: lambda starts at 1e-3, x10 on a rejected step, /10 on an
    accepted one. Stops on relative cost decrease < 1e-10 or step norm
    < 1e-10; ``converged`` is False if the iteration cap is hit first.
    """
    if len(samples) < 15:
        raise ValueError(f"need at least 15 samples, got {len(samples)}")
    if not allow_single_side:
        samples = [s for s in samples if s.valid_left and s.valid_right]
        if len(samples) < 15:
            raise ValueError("fewer than 15 both-sides-valid samples")
    st = _Stacked(samples, rig)
    t_cam, t_mount, t_mark = init

    def residuals_at(delta: np.ndarray) -> np.ndarray:
        c, m, k = _apply_delta(t_cam, t_mount, t_mark, delta)
        return st.residuals(c, m, k.t)

    def jacobian() -> np.ndarray:
        base = np.zeros(15)
        cols = []
        for j in range(15):
            step = base.copy()
            step[j] = FD_STEP
            r_plus = residuals_at(step)
            step[j] = -FD_STEP
            r_minus = residuals_at(step)
            cols.append((r_plus - r_minus) / (2.0 * FD_STEP))
        return np.stack(cols, axis=1)

    r = st.residuals(t_cam, t_mount, t_mark.t)
    cost_now = float(r @ r)
    lam = 1e-3
    iterations = 0
    converged = False

    for iterations in range(1, max_iterations + 1):
        jac = jacobian()
        a = jac.T @ jac
        if iterations == 1:
            cond = np.linalg.cond(a)
            if cond > 1e8:
                evals, evecs = np.linalg.eigh(a)
                direction = PARAM_NAMES[int(np.argmax(np.abs(evecs[:, 0])))]
                raise ValueError(
                    "unidentifiable configuration: normal equations are "
                    f"rank-deficient (cond={cond:.2e}), near-null direction: {direction}"
                )
        g = jac.T @ r
        accepted = False
        while lam < 1e12:
            try:
                delta = np.linalg.solve(a + lam * np.eye(15), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            r_new = residuals_at(delta)
            cost_new = float(r_new @ r_new)
            if cost_new < cost_now:
                t_cam, t_mount, t_mark = _apply_delta(t_cam, t_mount, t_mark, delta)
                rel_drop = (cost_now - cost_new) / max(cost_now, 1e-300)
                step_norm = float(np.linalg.norm(delta))
                r, cost_now = r_new, cost_new
                lam = max(lam / 10.0, 1e-12)
                accepted = True
                if rel_drop < 1e-10 or step_norm < 1e-10:
                    converged = True
                break
            lam *= 10.0
        if not accepted:
            converged = True  # no descent direction left: at a minimum
            break
        if converged:
            break

    n_components = int(st.side_valid.sum()) * 2
    return CalibEstimate(
        t_cam=t_cam,
        t_mount=t_mount,
        t_mark=t_mark,
        rms_px=math.sqrt(cost_now / n_components),
        iterations=iterations,
        converged=converged,
    )


# --- synthetic data -------------------------------------------------------

def default_ground_truth() -> tuple[Pose, Pose, Pose]:
    """Fixed, generic ground-truth transforms for the synthetic pipeline.

    Head base at the origin, flange looking along +x with z up. The
    camera sits slightly ahead/above the head flange, optical axis along
    the flange's forward direction; the arm base is mounted ahead and
    below, yawed toward the head.
    """
    r_cam = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    t_cam = compose(
        Pose.from_matrix(np.block([[r_cam, np.array([[0.05], [0.01], [0.08]])], [np.zeros((1, 3)), np.ones((1, 1))]])),
        exp([0.02, -0.015, 0.03, 0.0, 0.0, 0.0]),
    )
    t_mount = compose(
        Pose.from_axis_angle([0, 0, 1], math.radians(12.0), [0.55, 0.05, -0.35]),
        exp([0.01, 0.02, 0.0, 0.0, 0.0, 0.0]),
    )
    t_mark = Pose(t=[0.04, 0.015, 0.06])
    return t_cam, t_mount, t_mark


def _head_pose(phase: float) -> Pose:
    """Sinusoidal sweep of the head flange (yaw/pitch + translation wobble)."""
    yaw = math.radians(35.0) * math.sin(2.0 * math.pi * phase)
    pitch = math.radians(12.0) * math.sin(2.0 * math.pi * 2.3 * phase + 0.7)
    trans = np.array(
        [
            0.05 * math.sin(2.0 * math.pi * 1.7 * phase),
            0.06 * math.sin(2.0 * math.pi * 0.9 * phase + 1.1),
            0.15 + 0.04 * math.sin(2.0 * math.pi * 1.3 * phase + 2.0),
        ]
    )
    return compose(
        Pose.from_axis_angle([0, 0, 1], yaw, trans), Pose.from_axis_angle([0, 1, 0], pitch)
    )


def generate_synthetic(
    ground_truth: tuple[Pose, Pose, Pose],
    rig: StereoRig,
    n: int,
    noise_px: float = 0.0,
    seed: int = 0,
    margin_frac: float = 0.05,
) -> list[CalibSample]:
    """Synthetic calibration set: sinusoidal head sweep, arm flange poses
    uniform in a reachable box, marker visible in both cameras. Pixel
    noise is i.i.d. Gaussian per component."""
    if n < 1:
        raise ValueError("n must be >= 1")
    t_cam, t_mount, t_mark = ground_truth
    rng = np.random.default_rng(seed)
    mx = margin_frac * rig.left.width
    my = margin_frac * rig.left.height
    samples: list[CalibSample] = []
    attempts = 0
    max_attempts = 200 * n
    while len(samples) < n and attempts < max_attempts:
        attempts += 1
        phase = len(samples) / max(n - 1, 1) + 0.013 * attempts / max_attempts
        t_head = _head_pose(phase)
        q = rng.normal(size=4)
        flange_t = rng.uniform([-0.25, -0.30, 0.25], [0.25, 0.30, 0.75])
        t_arm = Pose(q, flange_t)
        sample = CalibSample(t_head=t_head, t_arm=t_arm, px_left=np.zeros(2), px_right=np.zeros(2))
        uv_l, uv_r, ok_l, ok_r = predict_pixels(t_cam, t_mount, t_mark, sample, rig)
        if not (ok_l and ok_r):
            continue
        if not (mx <= uv_l[0] <= rig.left.width - mx and my <= uv_l[1] <= rig.left.height - my):
            continue
        if not (mx <= uv_r[0] <= rig.right.width - mx and my <= uv_r[1] <= rig.right.height - my):
            continue
        if noise_px > 0.0:
            uv_l = uv_l + rng.normal(scale=noise_px, size=2)
            uv_r = uv_r + rng.normal(scale=noise_px, size=2)
        samples.append(
            CalibSample(t_head=t_head, t_arm=t_arm, px_left=uv_l, px_right=uv_r)
        )
    if len(samples) < n:
        raise ValueError(
            f"synthetic generation yielded only {len(samples)}/{n} visible samples "
            f"after {attempts} attempts"
        )
    return samples


def perturbed(poses: tuple[Pose, Pose, Pose], trans_m: float, rot_rad: float, rng) -> tuple[Pose, Pose, Pose]:
    """Each pose composed with a random twist of the given magnitudes."""
    out = []
    for p in poses:
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        out.append(compose(exp(np.concatenate([axis * rot_rad, direction * trans_m])), p))
    return tuple(out)


def samples_to_json(samples: list[CalibSample]) -> dict:
    return {"schema": 1, "samples": [s.to_json() for s in samples]}


def samples_from_json(d: dict) -> list[CalibSample]:
    return [CalibSample.from_json(s) for s in d["samples"]]
