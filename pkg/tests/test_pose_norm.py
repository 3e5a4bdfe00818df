import numpy as np
import pytest

from uptransfer.data_model import JOINT_INDEX, KeypointFrame
from uptransfer.fixtures import gen_puppet_clip
from uptransfer.pose_norm import (LinearTransform, PoseStats, StatisticsError, apply_transform,
                                  compute_pose_stats, fit_normalization, normalize_sequence)


def frame(**pts):
    j = np.zeros((12, 3))
    for name, (x, y) in pts.items():
        j[JOINT_INDEX[name]] = [x, y, 1.0]
    return KeypointFrame(j)


def test_stats_single_frame():
    f = frame(r_shoulder=(40, 100), l_shoulder=(80, 100), neck=(60, 100), nose=(60, 80))
    s = compute_pose_stats([f])
    assert s.median_shoulder_width == 40.0
    assert s.median_neck == (60.0, 100.0)
    assert s.median_torso == 20.0


def test_stats_median_width():
    frames = [frame(r_shoulder=(0, 0), l_shoulder=(w, 0), neck=(w / 2, 0), nose=(w / 2, -10))
              for w in (40, 44, 60)]
    assert compute_pose_stats(frames).median_shoulder_width == 44.0


def test_stats_skip_incomplete_and_fail_when_none_usable():
    no_neck = frame(r_shoulder=(0, 0), l_shoulder=(10, 0), nose=(5, -5))
    with pytest.raises(StatisticsError):
        compute_pose_stats([no_neck, no_neck])
    good = frame(r_shoulder=(0, 0), l_shoulder=(30, 0), neck=(15, 0), nose=(15, -10))
    assert compute_pose_stats([no_neck, good]).median_shoulder_width == 30.0


def test_fit_identity():
    a = PoseStats(40.0, (100.0, 50.0), 20.0)
    t = fit_normalization(a, a)
    assert t.scale == 1.0 and t.offset == (0.0, 0.0)


def test_fit_hand_example():
    t = fit_normalization(PoseStats(40.0, (100.0, 50.0), 20.0), PoseStats(80.0, (120.0, 60.0), 30.0))
    assert t.scale == 2.0
    assert t.offset == (-80.0, -40.0)


def test_uniform_stat_doubling_keeps_scale():
    rng = np.random.default_rng(0)
    for _ in range(200):
        wa, wb = rng.uniform(1, 100, 2)
        a = PoseStats(wa, tuple(rng.uniform(-50, 50, 2)), rng.uniform(1, 10))
        b = PoseStats(wb, tuple(rng.uniform(-50, 50, 2)), rng.uniform(1, 10))
        a2 = PoseStats(2 * wa, tuple(2 * np.array(a.median_neck)), 2 * a.median_torso)
        b2 = PoseStats(2 * wb, tuple(2 * np.array(b.median_neck)), 2 * b.median_torso)
        assert fit_normalization(a2, b2).scale == pytest.approx(fit_normalization(a, b).scale, rel=1e-14)


def test_apply_identity_bit_equal():
    f = gen_puppet_clip(1, 1).keypoints[0]
    g = apply_transform(LinearTransform.identity(), f)
    assert np.array_equal(g.joints, f.joints)


def test_apply_scale():
    f = frame(nose=(10, 20))
    g = apply_transform(LinearTransform(2.0, (0.0, 0.0)), f)
    assert tuple(g.point("nose")) == (20.0, 40.0)


def test_apply_leaves_missing_and_confidence():
    j = np.ones((12, 3))
    j[:, 0] = np.arange(12)
    j[4] = [7.0, 9.0, 0.0]
    j[5, 2] = 0.3
    g = apply_transform(LinearTransform(3.0, (1.0, -1.0)), KeypointFrame(j))
    assert tuple(g.joints[4]) == (7.0, 9.0, 0.0)
    assert np.array_equal(g.confidence, KeypointFrame(j).confidence)


def _rigid_pair(seed, scale, shift):
    src = gen_puppet_clip(seed, 10, with_frames=False).keypoints
    tgt = normalize_sequence(LinearTransform(scale, shift), src)
    return src, tgt


def test_closure_on_rigid_clip():
    src, tgt = _rigid_pair(4, 1.37, (5.5, -3.25))
    A, B = compute_pose_stats(src), compute_pose_stats(tgt)
    moved = compute_pose_stats(normalize_sequence(fit_normalization(A, B), src))
    assert moved.median_shoulder_width == pytest.approx(B.median_shoulder_width, abs=1e-9)
    assert moved.median_torso == pytest.approx(B.median_torso, abs=1e-9)
    np.testing.assert_allclose(moved.median_neck, B.median_neck, atol=1e-9, rtol=0)


def test_composition_is_identity():
    rng = np.random.default_rng(1)
    f = gen_puppet_clip(9, 1).keypoints[0]
    for _ in range(50):
        a = PoseStats(rng.uniform(5, 80), tuple(rng.uniform(0, 200, 2)), rng.uniform(5, 30))
        b = PoseStats(rng.uniform(5, 80), tuple(rng.uniform(0, 200, 2)), rng.uniform(5, 30))
        back = apply_transform(fit_normalization(b, a), apply_transform(fit_normalization(a, b), f))
        np.testing.assert_allclose(back.xy, f.xy, atol=1e-9, rtol=0)


def test_translation_changes_only_offset():
    rng = np.random.default_rng(2)
    src = gen_puppet_clip(5, 6, with_frames=False).keypoints
    tgt = compute_pose_stats(gen_puppet_clip(6, 6, with_frames=False).keypoints)
    base = fit_normalization(compute_pose_stats(src), tgt)
    for _ in range(20):
        d = rng.uniform(-30, 30, 2)
        shifted = normalize_sequence(LinearTransform(1.0, tuple(d)), src)
        t = fit_normalization(compute_pose_stats(shifted), tgt)
        assert t.scale == pytest.approx(base.scale, rel=1e-12)
        np.testing.assert_allclose(np.array(t.offset), np.array(base.offset) - base.scale * d, atol=1e-9)
