import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spheroview import geom, headctl
from spheroview.geom import Pose, compose, inverse
from spheroview.headctl import (
    FilterState,
    HeadMapping,
    JumpGuard,
    Mode,
    VelocityCaps,
    filter_alpha,
    filter_step,
    flatten_yaw,
    map_head,
)


def assert_pose_close(a, b, tol=1e-9):
    d_t, d_r = geom.distance(a, b)
    assert d_t < tol and d_r < tol


class TestFlattenYaw:
    def test_identity_fixed(self):
        assert_pose_close(flatten_yaw(geom.IDENTITY), geom.IDENTITY)

    def test_pure_yaw_unchanged(self):
        p = Pose.from_axis_angle([0, 0, 1], math.radians(30), [1, 2, 3])
        assert_pose_close(flatten_yaw(p), p)

    def test_removes_pitch(self):
        yaw = Pose.from_axis_angle([0, 0, 1], math.radians(30))
        pitch = Pose.from_axis_angle([0, 1, 0], math.radians(20))
        flat = flatten_yaw(compose(yaw, pitch))
        assert_pose_close(flat, yaw)

    def test_z_axis_stays_up(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            q = rng.normal(size=4)
            p = Pose(q, rng.normal(size=3))
            try:
                flat = flatten_yaw(p)
            except ValueError:
                continue
            assert np.allclose(flat.rotation_matrix @ [0, 0, 1], [0, 0, 1], atol=1e-9)

    def test_gimbal_raises(self):
        looking_up = Pose.from_axis_angle([0, 1, 0], -math.pi / 2)
        with pytest.raises(ValueError, match="undefined yaw"):
            flatten_yaw(looking_up)


class TestMapHead:
    def setup_method(self):
        robot_nom = Pose.from_axis_angle([0, 0, 1], 0.3, [0.5, 0.0, 1.2])
        vr_raw = compose(
            Pose.from_axis_angle([0, 0, 1], -0.7, [0.1, 0.2, 1.6]),
            Pose.from_axis_angle([0, 1, 0], 0.05),
        )
        self.m = HeadMapping.capture(robot_nom, vr_raw)

    def test_fixed_point(self):
        assert_pose_close(map_head(self.m, self.m.t_vr_nom), self.m.t_robot_nom)

    def test_translation_maps_through_nominal_axes(self):
        shift = Pose(t=[0.1, 0, 0])
        moved = compose(self.m.t_vr_nom, shift)
        out = map_head(self.m, moved)
        expect = compose(self.m.t_robot_nom, shift)
        assert_pose_close(out, expect)

    def test_matches_matrix_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            head = Pose(rng.normal(size=4), rng.normal(size=3))
            mat = (
                self.m.t_robot_nom.to_matrix()
                @ np.linalg.inv(self.m.t_vr_nom.to_matrix())
                @ head.to_matrix()
            )
            assert_pose_close(map_head(self.m, head), Pose.from_matrix(mat))

    def test_nominal_is_yaw_flattened(self):
        up = self.m.t_vr_nom.rotation_matrix @ [0, 0, 1]
        assert np.allclose(up, [0, 0, 1], atol=1e-9)


class TestFilter:
    def test_alpha_value(self):
        # frozen from the definition a = dt/(dt + 1/(2*pi*fc))
        assert filter_alpha(1 / 90, 100.0) == pytest.approx(0.8747073949073191, abs=1e-12)

    def test_first_call_snaps(self):
        s = FilterState()
        target = Pose(t=[1, 2, 3])
        out = filter_step(s, target, 0.01)
        assert_pose_close(out, target)

    def test_monotone_convergence(self):
        s = FilterState()
        filter_step(s, geom.IDENTITY, 0.01)
        target = Pose.from_axis_angle([0, 0, 1], 0.5, [1.0, 0.0, 0.0])
        last = np.inf
        for _ in range(60):
            out = filter_step(s, target, 0.01)
            d = np.linalg.norm(out.t - target.t)
            assert d < last + 1e-15
            last = d
        assert last < 1e-3

    def test_geometric_decay(self):
        fc, dt = 100.0, 1 / 90
        a = filter_alpha(dt, fc)
        s = FilterState()
        filter_step(s, geom.IDENTITY, dt, fc)
        target = Pose(t=[1.0, 0.0, 0.0])
        for k in range(1, 20):
            out = filter_step(s, target, dt, fc)
            expect = 1.0 - (1.0 - a) ** k
            assert out.t[0] == pytest.approx(expect, abs=1e-12)

    def test_rate_independence_in_continuous_limit(self):
        # smooth input followed at dt and dt/2 ends up within 1%
        fc = 10.0

        def run(dt, steps):
            s = FilterState()
            filter_step(s, Pose(t=[0, 0, 0]), dt, fc)
            out = None
            for i in range(steps):
                t = (i + 1) * dt
                target = Pose(t=[math.sin(t), 0, 0])
                out = filter_step(s, target, dt, fc)
            return out.t[0]

        a = run(0.01, 100)
        b = run(0.005, 200)
        assert abs(a - b) < 0.01 * max(abs(a), abs(b))

    def test_rejects_bad_dt(self):
        with pytest.raises(ValueError):
            filter_step(FilterState(), geom.IDENTITY, 0.0)


class TestJumpGuard:
    def test_small_motion_equals_filter(self):
        guard = JumpGuard()
        s1, s2 = FilterState(), FilterState()
        guard.step(s1, geom.IDENTITY, 0.01)
        filter_step(s2, geom.IDENTITY, 0.01)
        target = Pose(t=[0.001, 0.0, 0.0])
        out_g = guard.step(s1, target, 0.01)
        out_f = filter_step(s2, target, 0.01)
        assert s1.mode is Mode.TRACKING
        assert_pose_close(out_g, out_f)

    def test_one_meter_jump_first_tick(self):
        guard = JumpGuard(caps=VelocityCaps(v_max=0.5, omega_max=math.pi))
        s = FilterState()
        guard.step(s, geom.IDENTITY, 0.01)
        out = guard.step(s, Pose(t=[1.0, 0, 0]), 0.01)
        assert s.mode is Mode.APPROACH
        assert out.t[0] == pytest.approx(0.005, abs=1e-12)

    def test_approach_tick_count(self):
        # pure cap arithmetic: hysteresis disabled so approach runs to arrival
        v_max, dt, dist = 0.5, 0.01, 1.0
        guard = JumpGuard(
            caps=VelocityCaps(v_max=v_max, omega_max=math.pi), reentry_m=0.0, reentry_rad=0.0
        )
        s = FilterState()
        guard.step(s, geom.IDENTITY, dt)
        target = Pose(t=[dist, 0, 0])
        ticks = 0
        while np.linalg.norm(s.current.t - target.t) > 1e-12:
            guard.step(s, target, dt)
            ticks += 1
            assert ticks < 1000
        assert ticks == math.ceil(dist / (v_max * dt))

    def test_reentry_to_tracking(self):
        guard = JumpGuard()
        s = FilterState()
        guard.step(s, geom.IDENTITY, 0.01)
        target = Pose(t=[1.0, 0, 0])
        for _ in range(500):
            guard.step(s, target, 0.01)
        assert s.mode is Mode.TRACKING
        assert np.linalg.norm(s.current.t - target.t) < guard.reentry_m + 1e-9

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_never_exceeds_caps(self, seed):
        rng = np.random.default_rng(seed)
        caps = VelocityCaps(v_max=0.5, omega_max=math.radians(120))
        guard = JumpGuard(caps=caps)
        s = FilterState()
        dt = 0.01
        guard.step(s, geom.IDENTITY, dt)
        prev = s.current
        for _ in range(300):
            target = Pose(rng.normal(size=4), rng.uniform(-2, 2, size=3))
            out = guard.step(s, target, dt)
            move = np.linalg.norm(out.t - prev.t)
            turn = compose(inverse(prev), out).rotation_angle()
            assert move <= caps.v_max * dt + 1e-9
            assert turn <= caps.omega_max * dt + 1e-9
            prev = out
