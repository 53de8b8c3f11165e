import json
import math

import numpy as np
import pytest

from spheroview import calib, camera, geom
from spheroview.calib import CalibSample, cost, generate_synthetic, predict_pixels, solve
from spheroview.geom import Pose


@pytest.fixture(scope="module")
def rig():
    return camera.default_rig()


@pytest.fixture(scope="module")
def gt():
    return calib.default_ground_truth()


@pytest.fixture(scope="module")
def clean_samples(gt, rig):
    return generate_synthetic(gt, rig, 200, noise_px=0.0, seed=7)


def test_degenerate_chain_hits_degenerate_point(rig):
    sample = CalibSample(
        t_head=geom.IDENTITY, t_arm=geom.IDENTITY, px_left=[0, 0], px_right=[0, 0]
    )
    with pytest.raises(ValueError, match="degenerate point"):
        predict_pixels(geom.IDENTITY, geom.IDENTITY, geom.IDENTITY, sample, rig)


def test_predictions_match_generated_detections(gt, rig, clean_samples):
    for s in clean_samples[:20]:
        uv_l, uv_r, ok_l, ok_r = predict_pixels(*gt, s, rig)
        assert ok_l and ok_r
        assert np.abs(uv_l - s.px_left).max() < 1e-9
        assert np.abs(uv_r - s.px_right).max() < 1e-9


def test_translation_perturbation_moves_pixels(gt, rig, clean_samples):
    t_cam, t_mount, t_mark = gt
    shifted = Pose(t_cam.q, t_cam.t + [0.01, 0, 0])
    s = clean_samples[0]
    uv0, _, _, _ = predict_pixels(t_cam, t_mount, t_mark, s, rig)
    uv1, _, _, _ = predict_pixels(shifted, t_mount, t_mark, s, rig)
    assert np.linalg.norm(uv1 - uv0) > 0.1


class TestCost:
    def test_zero_at_ground_truth(self, gt, rig, clean_samples):
        assert cost(*gt, clean_samples, rig) < 1e-12

    def test_order_invariant(self, gt, rig, clean_samples):
        shuffled = list(clean_samples)
        np.random.default_rng(0).shuffle(shuffled)
        assert cost(*gt, clean_samples, rig) == pytest.approx(
            cost(*gt, shuffled, rig), abs=1e-9
        )

    def test_one_pixel_offset_costs_n(self, gt, rig, clean_samples):
        offset = [
            CalibSample(
                t_head=s.t_head, t_arm=s.t_arm, px_left=s.px_left + [1.0, 0.0], px_right=s.px_right
            )
            for s in clean_samples
        ]
        assert cost(*gt, offset, rig) == pytest.approx(len(offset), abs=1e-6)

    def test_empty_rejected(self, gt, rig):
        with pytest.raises(ValueError):
            cost(*gt, [], rig)


class TestSolve:
    def test_noiseless_recovery(self, gt, rig, clean_samples):
        rng = np.random.default_rng(3)
        init = calib.perturbed(gt, 0.05, math.radians(5.0), rng)
        est = solve(clean_samples, rig, init)
        assert est.converged
        for want, got in [(gt[0], est.t_cam), (gt[1], est.t_mount)]:
            d_t, d_r = geom.distance(want, got)
            assert d_t < 1e-4
            assert math.degrees(d_r) < 0.01
        assert np.linalg.norm(est.t_mark.t - gt[2].t) < 1e-4
        assert est.rms_px < 1e-6

    def test_init_at_truth_converges_fast(self, gt, rig, clean_samples):
        est = solve(clean_samples, rig, gt)
        assert est.converged
        assert est.iterations <= 2
        assert est.rms_px < 1e-9

    def test_init_independence(self, gt, rig, clean_samples):
        results = []
        for seed in range(3):
            rng = np.random.default_rng(seed)
            init = calib.perturbed(gt, 0.05, math.radians(5.0), rng)
            results.append(solve(clean_samples, rig, init))
        for a in results[1:]:
            d_t, d_r = geom.distance(results[0].t_cam, a.t_cam)
            assert d_t < 1e-3 and math.degrees(d_r) < 0.05
            d_t, d_r = geom.distance(results[0].t_mount, a.t_mount)
            assert d_t < 1e-3 and math.degrees(d_r) < 0.05

    def test_noisy_recovery_single_seed(self, gt, rig):
        samples = generate_synthetic(gt, rig, 200, noise_px=0.5, seed=11)
        rng = np.random.default_rng(42)
        init = calib.perturbed(gt, 0.05, math.radians(5.0), rng)
        est = solve(samples, rig, init)
        assert est.converged
        assert 0.35 <= est.rms_px <= 0.65
        d_t, _ = geom.distance(gt[0], est.t_cam)
        assert d_t < 2e-3

    def test_too_few_samples(self, gt, rig, clean_samples):
        with pytest.raises(ValueError, match="15"):
            solve(clean_samples[:10], rig, gt)

    def test_degenerate_motion_rejected(self, gt, rig):
        # frozen head: t_cam / t_mount entangled, normal equations near-singular
        frozen = calib._head_pose(0.25)
        rng = np.random.default_rng(5)
        samples = []
        for s in generate_synthetic(gt, rig, 400, noise_px=0.0, seed=2):
            cand = CalibSample(
                t_head=frozen, t_arm=s.t_arm, px_left=np.zeros(2), px_right=np.zeros(2)
            )
            uv_l, uv_r, ok_l, ok_r = predict_pixels(*gt, cand, rig)
            if ok_l and ok_r:
                samples.append(
                    CalibSample(t_head=frozen, t_arm=s.t_arm, px_left=uv_l, px_right=uv_r)
                )
            if len(samples) == 50:
                break
        assert len(samples) == 50
        init = calib.perturbed(gt, 0.02, math.radians(2.0), rng)
        with pytest.raises(ValueError, match="unidentifiable configuration"):
            solve(samples, rig, init)

    def test_gauge_condition_number(self, gt, rig, clean_samples):
        st = calib._Stacked(clean_samples, rig)
        cols = []
        for j in range(15):
            step = np.zeros(15)
            step[j] = 1e-6
            plus = calib._apply_delta(*gt, step)
            step[j] = -1e-6
            minus = calib._apply_delta(*gt, step)
            cols.append(
                (st.residuals(plus[0], plus[1], plus[2].t) - st.residuals(minus[0], minus[1], minus[2].t))
                / 2e-6
            )
        a = np.stack(cols, axis=1)
        assert np.linalg.cond(a.T @ a) < 1e8


class TestGenerateSynthetic:
    def test_noiseless_exact(self, gt, rig, clean_samples):
        s = clean_samples[5]
        uv_l, uv_r, _, _ = predict_pixels(*gt, s, rig)
        assert np.allclose(uv_l, s.px_left, atol=1e-12)
        assert np.allclose(uv_r, s.px_right, atol=1e-12)

    def test_same_seed_identical_file(self, gt, rig):
        a = calib.samples_to_json(generate_synthetic(gt, rig, 40, noise_px=0.3, seed=9))
        b = calib.samples_to_json(generate_synthetic(gt, rig, 40, noise_px=0.3, seed=9))
        assert json.dumps(a) == json.dumps(b)

    def test_noise_statistics(self, gt, rig):
        noisy = generate_synthetic(gt, rig, 1000, noise_px=0.5, seed=13)
        devs = []
        for s in noisy:
            uv_l, uv_r, _, _ = predict_pixels(*gt, s, rig)
            devs.extend(uv_l - s.px_left)
            devs.extend(uv_r - s.px_right)
        std = float(np.std(devs))
        assert abs(std - 0.5) < 0.05

    def test_pixels_inside_bounds(self, rig, clean_samples):
        for s in clean_samples:
            assert 0 <= s.px_left[0] <= rig.left.width
            assert 0 <= s.px_left[1] <= rig.left.height
            assert 0 <= s.px_right[0] <= rig.right.width
            assert 0 <= s.px_right[1] <= rig.right.height

    def test_json_round_trip(self, gt, rig, clean_samples):
        d = calib.samples_to_json(clean_samples[:5])
        back = calib.samples_from_json(json.loads(json.dumps(d)))
        for a, b in zip(clean_samples[:5], back):
            assert np.allclose(a.px_left, b.px_left)
            assert a.t_head == b.t_head
