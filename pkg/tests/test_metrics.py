import numpy as np
import pytest

from gapseg import backend
from gapseg.metrics import (
    aggregate_reports,
    boundary_accuracy,
    boundary_distance_map,
    collapse_sediment,
    confusion_matrix,
    evaluate_pair,
    overall_accuracy,
)
from gapseg.raster_io import IGNORE, LabelMask


def brute_force_distance_map(labels: np.ndarray) -> np.ndarray:
    """Independent oracle: per-pixel min over all differing pixels."""
    h, w = labels.shape
    rr, cc = np.mgrid[0:h, 0:w]
    out = np.full((h, w), np.inf)
    for r in range(h):
        for c in range(w):
            mine = labels[r, c]
            if mine == IGNORE:
                continue
            differs = (labels != mine) & (labels != IGNORE)
            if differs.any():
                d2 = (rr - r) ** 2 + (cc - c) ** 2
                out[r, c] = np.sqrt(int(d2[differs].min()))
    return out


def random_mask(rng, max_side=32, p_ignore=0.05) -> LabelMask:
    h = int(rng.integers(1, max_side + 1))
    w = int(rng.integers(1, max_side + 1))
    labels = rng.choice([0, 1, 2], size=(h, w)).astype(np.uint8)
    labels[rng.random((h, w)) < p_ignore] = IGNORE
    return LabelMask(labels)


def test_distance_map_hand_case():
    mask = LabelMask(np.array([[0, 0, 1, 1]], dtype=np.uint8))
    assert boundary_distance_map(mask).tolist() == [[2.0, 1.0, 1.0, 2.0]]


def test_distance_map_uniform_infinite():
    mask = LabelMask(np.full((5, 5), 1, dtype=np.uint8))
    assert np.all(np.isinf(boundary_distance_map(mask)))


def test_distance_map_ignore_not_a_target():
    # the water pixel's nearest differing pixel must skip the ignore pixel
    mask = LabelMask(np.array([[1, 255, 0]], dtype=np.uint8))
    dmap = boundary_distance_map(mask)
    assert dmap[0, 0] == 2.0
    assert np.isinf(dmap[0, 1])
    assert dmap[0, 2] == 2.0


@pytest.mark.parametrize("use_numba", [False, True])
def test_distance_map_brute_force_oracle(use_numba, monkeypatch):
    if use_numba and not backend.HAS_NUMBA:
        pytest.skip("numba not installed")
    monkeypatch.setattr(backend, "USE_NUMBA", use_numba)
    rng = np.random.default_rng(0)
    for trial in range(25):
        mask = random_mask(rng)
        got = boundary_distance_map(mask)
        ref = brute_force_distance_map(mask.labels)
        valid = mask.labels != IGNORE
        assert np.array_equal(got[valid], ref[valid]), f"trial {trial}"


def test_distance_map_symmetry():
    rng = np.random.default_rng(3)
    mask = random_mask(rng, max_side=16, p_ignore=0.0)
    base = boundary_distance_map(mask)
    rot = boundary_distance_map(LabelMask(np.rot90(mask.labels).copy()))
    assert np.array_equal(rot, np.rot90(base))
    flip = boundary_distance_map(LabelMask(mask.labels[::-1].copy()))
    assert np.array_equal(flip, base[::-1])


def test_overall_accuracy_perfect():
    mask = LabelMask(np.array([[0, 1], [2, 0]], dtype=np.uint8))
    assert overall_accuracy(mask, mask) == 1.0


def test_overall_accuracy_naive_land_on_80pct_land():
    labels = np.zeros((10, 10), dtype=np.uint8)
    labels[:2, :] = 1  # 20 water pixels, 80 land
    truth = LabelMask(labels)
    pred = LabelMask(np.zeros((10, 10), dtype=np.uint8))
    assert overall_accuracy(pred, truth) == pytest.approx(0.8)


def test_overall_accuracy_one_of_four():
    truth = LabelMask(np.array([[0, 0], [0, 1]], dtype=np.uint8))
    pred = LabelMask(np.array([[0, 0], [0, 0]], dtype=np.uint8))
    assert overall_accuracy(pred, truth) == 0.75


def test_overall_accuracy_all_ignore_undefined():
    truth = LabelMask(np.full((2, 2), IGNORE, dtype=np.uint8))
    pred = LabelMask(np.zeros((2, 2), dtype=np.uint8))
    assert overall_accuracy(pred, truth) is None


def test_overall_accuracy_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        overall_accuracy(
            LabelMask(np.zeros((2, 2), dtype=np.uint8)),
            LabelMask(np.zeros((2, 3), dtype=np.uint8)),
        )


def test_boundary_accuracy_perfect():
    mask = LabelMask(np.array([[0, 0, 1, 1]], dtype=np.uint8))
    for d in (1, 2, 5):
        assert boundary_accuracy(mask, mask, d) == 1.0


def test_boundary_accuracy_far_error_invisible_near_boundary():
    # vertical land/water split; flip one pixel at boundary distance 9
    labels = np.zeros((20, 20), dtype=np.uint8)
    labels[:, 10:] = 1
    truth = LabelMask(labels)
    dmap = boundary_distance_map(truth)
    pred_labels = labels.copy()
    assert dmap[5, 1] == 9.0
    pred_labels[5, 1] = 1
    pred = LabelMask(pred_labels)
    assert boundary_accuracy(pred, truth, 3.0) == 1.0
    oa = overall_accuracy(pred, truth)
    assert oa == pytest.approx(1.0 - 1.0 / 400.0)


def test_boundary_accuracy_uniform_truth_undefined():
    truth = LabelMask(np.zeros((4, 4), dtype=np.uint8))
    pred = LabelMask(np.zeros((4, 4), dtype=np.uint8))
    assert boundary_accuracy(pred, truth, 3.0) is None


def test_boundary_accuracy_coverage_monotone():
    rng = np.random.default_rng(5)
    mask = random_mask(rng, max_side=20, p_ignore=0.1)
    dmap = boundary_distance_map(mask)
    valid = mask.labels != IGNORE
    counts = [
        int((valid & (dmap <= d)).sum()) for d in (1.0, 2.0, 5.0, 10.0, np.inf)
    ]
    assert counts == sorted(counts)
    # at d = inf the BA denominator is exactly the OA denominator:
    # every non-ignore pixel has a (possibly infinite) boundary distance
    has_boundary = np.isfinite(dmap[valid]).all()
    if has_boundary:
        assert counts[-1] == int(valid.sum())


def test_collapse_sediment():
    mask = LabelMask(np.array([[0, 1, 2]], dtype=np.uint8))
    out = collapse_sediment(mask)
    assert out.labels.tolist() == [[0, 1, 0]]
    again = collapse_sediment(out)
    assert np.array_equal(again.labels, out.labels)


def test_collapse_without_sediment_unchanged():
    mask = LabelMask(np.array([[0, 1, 255]], dtype=np.uint8))
    assert np.array_equal(collapse_sediment(mask).labels, mask.labels)


def test_confusion_matrix_counts():
    truth = LabelMask(np.array([[0, 0, 1], [2, 255, 1]], dtype=np.uint8))
    pred = LabelMask(np.array([[0, 1, 1], [2, 0, 0]], dtype=np.uint8))
    conf = confusion_matrix(pred, truth)
    assert conf.sum() == 5  # ignore pixel excluded
    assert conf[0, 0] == 1 and conf[0, 1] == 1
    assert conf[1, 1] == 1 and conf[1, 0] == 1
    assert conf[2, 2] == 1


def test_evaluate_pair_report():
    truth = LabelMask(np.array([[0, 0, 1, 1]], dtype=np.uint8))
    pred = LabelMask(np.array([[0, 1, 1, 1]], dtype=np.uint8))
    report = evaluate_pair(pred, truth, ba_distances=(1.0, 3.0))
    assert report.oa == 0.75
    assert report.ba["1"] == 0.5  # pixels at distance <= 1: cols 1, 2
    assert report.ba["3"] == 0.75
    assert report.pixels == 4 and report.ignored == 0
    assert report.confusion.sum() == 4
    payload = report.to_json()
    assert set(payload) == {"oa", "ba", "confusion", "pixels", "ignored"}


def test_aggregate_pixel_weighted():
    big_truth = LabelMask(np.repeat([[0, 1]], 8, axis=0).astype(np.uint8))
    big_pred = LabelMask(big_truth.labels.copy())
    small_truth = LabelMask(np.array([[0, 1]], dtype=np.uint8))
    small_pred = LabelMask(np.array([[1, 0]], dtype=np.uint8))  # all wrong
    r1 = evaluate_pair(big_pred, big_truth, (1.0,))
    r2 = evaluate_pair(small_pred, small_truth, (1.0,))
    agg = aggregate_reports([r1, r2])
    assert agg.pixels == 18
    assert agg.oa == pytest.approx(16 / 18)
    assert agg.ba["1"] == pytest.approx(16 / 18)


def test_aggregate_undefined_stays_none():
    uniform = LabelMask(np.zeros((3, 3), dtype=np.uint8))
    r = evaluate_pair(uniform, uniform, (3.0,))
    assert r.ba["3"] is None
    agg = aggregate_reports([r, r])
    assert agg.ba["3"] is None
    assert agg.oa == 1.0
