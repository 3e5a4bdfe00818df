import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uptransfer.data_model import FaupVector
from uptransfer.fixtures import blendshape_landmarks, gen_puppet_clip, make_identity
from uptransfer.raster import CanvasSpec


def test_same_seed_is_bit_identical():
    a, b = gen_puppet_clip(3, 4), gen_puppet_clip(3, 4)
    assert a.keypoints == b.keypoints and a.faups == b.faups and a.landmarks == b.landmarks
    assert all(np.array_equal(x, y) for x, y in zip(a.frames, b.frames))


def test_single_frame_clip():
    c = gen_puppet_clip(0, 1)
    assert len(c.keypoints) == len(c.faups) == len(c.frames) == 1
    assert c.frames[0].shape == (3, 64, 64)
    assert 0 <= c.frames[0].min() and c.frames[0].max() <= 1


def test_frame_prefix_independent_of_length():
    short, long = gen_puppet_clip(7, 8), gen_puppet_clip(7, 16)
    assert short.landmarks == long.landmarks[:8]
    assert all(np.array_equal(x, y) for x, y in zip(short.frames, long.frames))


@pytest.mark.parametrize("seed", [0, 5, 11])
def test_stored_landmarks_match_oracle_exactly(seed):
    c = gen_puppet_clip(seed, 6, with_frames=False)
    ident = make_identity(seed)
    for v, lm in zip(c.faups, c.landmarks):
        assert np.array_equal(blendshape_landmarks(v, ident).points, lm.points)


def test_zero_faup_gives_mean_shape():
    ident = make_identity(4)
    assert np.array_equal(blendshape_landmarks(FaupVector.zeros(), ident).points, ident.mean_shape)


def _zero_angle(aus):
    return FaupVector(np.asarray(aus, dtype=float), np.zeros(3))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 2.5), min_size=17, max_size=17),
       st.lists(st.floats(0, 2.5), min_size=17, max_size=17))
def test_blendshape_is_linear_at_zero_angles(a, b):
    ident = make_identity(2)
    mean = ident.mean_shape
    lhs = blendshape_landmarks(_zero_angle(np.add(a, b)), ident).points - mean
    rhs = (blendshape_landmarks(_zero_angle(a), ident).points - mean
           + blendshape_landmarks(_zero_angle(b), ident).points - mean)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9


def test_roll_rotates_about_centroid():
    ident = make_identity(6)
    aus = np.linspace(0.5, 3.0, 17)
    flat = ident.mean_shape + ident.blend_basis @ np.concatenate([aus, [0, 0, 0]])
    cx = sum(p[0] for p in flat) / len(flat)
    cy = sum(p[1] for p in flat) / len(flat)
    th = math.pi / 6
    expected = [(cx + math.cos(th) * (x - cx) - math.sin(th) * (y - cy),
                 cy + math.sin(th) * (x - cx) + math.cos(th) * (y - cy)) for x, y in flat]
    got = blendshape_landmarks(FaupVector(aus, np.array([0.0, 0.0, th])), ident).points
    assert np.max(np.abs(got - np.array(expected))) <= 1e-9


def test_identity_dependence():
    v = FaupVector(np.full(17, 2.0), np.array([0.1, -0.1, 0.05]))
    a = blendshape_landmarks(v, make_identity(1)).points
    b = blendshape_landmarks(v, make_identity(2)).points
    assert not np.allclose(a, b)


@pytest.mark.parametrize("seed", range(5))
def test_faup_trajectories_stay_in_range(seed):
    c = gen_puppet_clip(seed, 40, with_frames=False)
    for v in c.faups:
        flat = v.flatten()
        assert np.all((flat[:17] >= 0) & (flat[:17] <= 5))
        assert np.all(np.abs(flat[17:]) <= math.pi / 2)


def test_larger_canvas():
    c = gen_puppet_clip(1, 2, CanvasSpec(96, 128))
    assert c.frames[0].shape == (3, 128, 96)
    assert c.canvas == (96, 128)


def test_bone_lengths_positive():
    assert np.all(make_identity(9).bone_lengths() > 0)
