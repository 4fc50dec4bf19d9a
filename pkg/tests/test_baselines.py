import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import scan_maxmax
from dttretrieval.baselines import (
    APPEARANCE_SIZE,
    FeatureSet,
    appearance_features,
    box_downscale,
    maxmax_cosine,
    sift_features,
)
from dttretrieval.densegrid import GridConfig
from dttretrieval.ingest import Frame, VideoSequence


def box_oracle(img, out_w, out_h, ss_x, ss_y):
    """Footprint average by midpoint sampling.

    Sample counts are chosen so every sample cell lies inside one source pixel,
    which makes the midpoint rule exact.
    """
    h, w = img.shape
    out = np.zeros((out_h, out_w))
    for oy in range(out_h):
        for ox in range(out_w):
            ys = (oy + (np.arange(ss_y) + 0.5) / ss_y) * h / out_h
            xs = (ox + (np.arange(ss_x) + 0.5) / ss_x) * w / out_w
            out[oy, ox] = img[np.floor(ys).astype(int)][:, np.floor(xs).astype(int)].mean()
    return out


def test_self_and_orthogonal():
    rng = np.random.default_rng(0)
    a = FeatureSet(rng.random((7, 5)))
    assert maxmax_cosine(a, a) == pytest.approx(1.0)
    e = FeatureSet(np.eye(4)[:2])
    f = FeatureSet(np.eye(4)[2:])
    assert maxmax_cosine(e, f) == 0.0


def test_random_sets_match_scan():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(50, 16)), rng.normal(size=(50, 16))
    assert maxmax_cosine(FeatureSet(a), FeatureSet(b)) == pytest.approx(scan_maxmax(a, b), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_symmetric_and_monotone_in_set_growth(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(int(rng.integers(1, 20)), 6))
    b = rng.normal(size=(int(rng.integers(1, 20)), 6))
    s_ab = maxmax_cosine(FeatureSet(a), FeatureSet(b))
    assert s_ab == pytest.approx(maxmax_cosine(FeatureSet(b), FeatureSet(a)), abs=1e-12)
    grown = np.vstack([a, rng.normal(size=(1, 6))])
    assert maxmax_cosine(FeatureSet(grown), FeatureSet(b)) >= s_ab - 1e-15
    assert -1.0 <= s_ab <= 1.0


def test_feature_set_errors():
    with pytest.raises(ValueError):
        FeatureSet(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        FeatureSet(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        maxmax_cosine(FeatureSet(np.ones((1, 2))), FeatureSet(np.ones((1, 3))))


def test_box_downscale_matches_oracle():
    rng = np.random.default_rng(2)
    img = rng.random((30, 45))
    np.testing.assert_allclose(box_downscale(img, 32, 24), box_oracle(img, 32, 24, 360, 40), atol=1e-12)
    exact = rng.random((48, 64))
    np.testing.assert_allclose(box_downscale(exact, 32, 24), exact.reshape(24, 2, 32, 2).mean(axis=(1, 3)),
                               atol=1e-12)


def test_appearance_features():
    rng = np.random.default_rng(3)
    frames = tuple(Frame(rng.random((48, 64))) for _ in range(3)) + (Frame(np.full((48, 64), 0.5)),)
    fs = appearance_features(VideoSequence("s", frames))
    assert fs.vectors.shape == (3, APPEARANCE_SIZE[0] * APPEARANCE_SIZE[1])
    np.testing.assert_allclose(fs.vectors.mean(axis=1), 0.0, atol=1e-12)
    assert fs.source == "appearance"


def test_sift_features_drop_flat_patches():
    img = np.full((40, 40), 0.5)
    img[:, 30:] = 0.9
    fs = sift_features(VideoSequence("s", (Frame(img),)), GridConfig())
    assert 0 < len(fs) < 121
    assert np.all(np.linalg.norm(fs.vectors, axis=1) > 0.99)
