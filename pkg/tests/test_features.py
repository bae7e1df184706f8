import math

import numpy as np
import pytest

from gapseg import backend
from gapseg.features import (
    FeatureConfig,
    extract_features,
    gaussian_patch_weights,
    load_feature_cache,
    reflect_index,
    save_feature_cache,
)
from gapseg.raster_io import RasterPatch


def naive_features(samples: np.ndarray, k: int, sigma_g: float) -> np.ndarray:
    """Reference implementation: plain loops, no shortcuts."""
    h, w, b = samples.shape
    side = 2 * k + 1
    out = np.empty((h * w, side * side * b), dtype=np.float32)
    for r in range(h):
        for c in range(w):
            col = 0
            for dr in range(-k, k + 1):
                rr = reflect_index(r + dr, h)
                for dc in range(-k, k + 1):
                    cc = reflect_index(c + dc, w)
                    wgt = math.exp(-(dr * dr + dc * dc) / (2.0 * sigma_g * sigma_g))
                    for bb in range(b):
                        out[r * w + c, col] = np.float32(
                            wgt * float(samples[rr, cc, bb])
                        )
                        col += 1
    return out


def test_reflect_in_range():
    assert reflect_index(3, 5) == 3


def test_reflect_negative():
    assert reflect_index(-1, 5) == 1
    assert reflect_index(-2, 5) == 2


def test_reflect_past_end():
    # sequence 0 1 2 3 4 | 3 2 ...
    assert reflect_index(5, 5) == 3
    assert reflect_index(6, 5) == 2


def test_reflect_small_extent_error():
    with pytest.raises(ValueError):
        reflect_index(1, 1)
    with pytest.raises(ValueError):
        reflect_index(-1, 1)


def test_reflect_double_reflection_error():
    with pytest.raises(ValueError):
        reflect_index(9, 5)  # 2*(5-1)-9 < 0


def test_config_defaults():
    config = FeatureConfig(k=3)
    assert config.sigma_g == 1.5
    assert config.patch_side == 7
    assert config.dim(6) == 294


def test_config_invalid():
    with pytest.raises(ValueError):
        FeatureConfig(k=0)
    with pytest.raises(ValueError):
        FeatureConfig(k=1, sigma_g=0.0)


def test_gaussian_weights_k1():
    w = gaussian_patch_weights(FeatureConfig(k=1, sigma_g=1.0))
    assert w[1, 1] == 1.0
    assert w[0, 1] == pytest.approx(math.exp(-0.5), abs=1e-12)
    assert w[0, 0] == pytest.approx(math.exp(-1.0), abs=1e-12)


def test_gaussian_weights_center_always_one():
    for k in (1, 2, 4):
        w = gaussian_patch_weights(FeatureConfig(k=k, sigma_g=0.7))
        assert w[k, k] == 1.0


def test_gaussian_weights_k3_corner():
    w = gaussian_patch_weights(FeatureConfig(k=3, sigma_g=1.5))
    assert w[6, 6] == pytest.approx(math.exp(-4.0), rel=1e-12)


def test_gaussian_weights_symmetry():
    w = gaussian_patch_weights(FeatureConfig(k=2, sigma_g=0.9))
    assert np.array_equal(w, w[::-1, :])
    assert np.array_equal(w, w[:, ::-1])
    assert np.array_equal(w, w.T)


def test_constant_patch_features():
    c = 2.5
    patch = RasterPatch(np.full((5, 6, 2), c, dtype=np.float32))
    config = FeatureConfig(k=2)
    feats = extract_features(patch, config)
    assert np.array_equal(feats.data, np.tile(feats.data[0], (feats.n, 1)))
    weights = gaussian_patch_weights(config).ravel()
    expected = np.repeat(weights, 2) * c
    assert np.allclose(feats.data[0], expected.astype(np.float32), atol=0)


def test_hand_case_2x2_unit_weights():
    patch = RasterPatch(np.array([[1, 2], [3, 4]], dtype=np.float32)[:, :, None])
    feats = extract_features(patch, FeatureConfig(k=1, sigma_g=np.inf))
    assert np.array_equal(
        feats.data[0], np.array([4, 3, 4, 2, 1, 2, 4, 3, 4], dtype=np.float32)
    )


def test_paper_scale_dimensions():
    rng = np.random.default_rng(0)
    patch = RasterPatch(rng.random((256, 256, 6), dtype=np.float32))
    feats = extract_features(patch, FeatureConfig(k=3))
    assert feats.n == 65536
    assert feats.dim == 294


def test_center_fidelity():
    rng = np.random.default_rng(5)
    patch = RasterPatch(rng.random((6, 7, 3), dtype=np.float32))
    k = 2
    feats = extract_features(patch, FeatureConfig(k=k))
    side = 2 * k + 1
    center_cols = ((k * side + k) * 3, (k * side + k) * 3 + 3)
    centers = feats.data[:, center_cols[0] : center_cols[1]]
    assert np.array_equal(centers, patch.samples.reshape(-1, 3))


def test_translation_consistency():
    # two interior pixels whose neighborhoods hold identical samples
    base = np.zeros((7, 9, 1), dtype=np.float32)
    tile = np.arange(9, dtype=np.float32).reshape(3, 3)
    base[1:4, 1:4, 0] = tile
    base[3:6, 5:8, 0] = tile
    feats = extract_features(RasterPatch(base), FeatureConfig(k=1))
    a = feats.data[2 * 9 + 2]
    b = feats.data[4 * 9 + 6]
    assert np.array_equal(a, b)


def test_dimension_law_randomized():
    rng = np.random.default_rng(11)
    for _ in range(6):
        k = int(rng.integers(1, 4))
        b = int(rng.integers(1, 4))
        h = int(rng.integers(k + 1, 9))
        w = int(rng.integers(k + 1, 9))
        patch = RasterPatch(rng.random((h, w, b)).astype(np.float32))
        feats = extract_features(patch, FeatureConfig(k=k))
        assert feats.dim == (2 * k + 1) ** 2 * b
        assert feats.n == h * w


def test_k_too_large_rejected():
    patch = RasterPatch(np.zeros((3, 8, 1), dtype=np.float32))
    with pytest.raises(ValueError, match="k="):
        extract_features(patch, FeatureConfig(k=3))


@pytest.mark.parametrize("use_numba", [False, True])
def test_oracle_equivalence_random_patches(use_numba, monkeypatch):
    if use_numba and not backend.HAS_NUMBA:
        pytest.skip("numba not installed")
    monkeypatch.setattr(backend, "USE_NUMBA", use_numba)
    rng = np.random.default_rng(77)
    for trial in range(8):
        h = int(rng.integers(2, 9))
        w = int(rng.integers(2, 9))
        b = int(rng.integers(1, 3))
        k = int(rng.integers(1, min(h, w)))
        samples = rng.standard_normal((h, w, b)).astype(np.float32)
        config = FeatureConfig(k=k)
        feats = extract_features(RasterPatch(samples), config)
        ref = naive_features(samples, k, config.sigma_g)
        assert np.array_equal(feats.data, ref), f"trial {trial} h={h} w={w} k={k}"


def test_provenance_layout():
    patch = RasterPatch(np.zeros((2, 3, 1), dtype=np.float32))
    feats = extract_features(patch, FeatureConfig(k=1), image_id=9)
    assert np.array_equal(feats.provenance[:, 0], np.full(6, 9))
    assert np.array_equal(feats.provenance[3], [9, 1, 0])


def test_feature_cache_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    patch = RasterPatch(rng.random((4, 5, 2)).astype(np.float32))
    feats = extract_features(patch, FeatureConfig(k=1), image_id=3)
    path = tmp_path / "f.gapf"
    save_feature_cache(feats, path)
    back = load_feature_cache(path)
    assert np.array_equal(back.data, feats.data)
    assert np.array_equal(back.provenance, feats.provenance)
    assert path.read_bytes()[:4] == b"GAPF"
