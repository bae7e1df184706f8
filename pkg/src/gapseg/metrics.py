"""Boundary-aware accuracy metrics.

A pixel's boundary distance is the Euclidean distance (between pixel
centers) to the nearest pixel carrying a different, non-ignore label;
+inf when no such pixel exists. Boundary accuracy BA(d) restricts plain
accuracy to pixels within distance d of a boundary; overall accuracy OA
uses every evaluated pixel. Ignore pixels count nowhere: not as
predictions, not as truth, not as boundary targets.

The distance map uses the exact two-pass squared-distance transform
(lower envelope of parabolas) on the numba path and scipy's exact
transform on the numpy path; both produce sqrt of the exact integer
squared distance, so results are identical bit for bit.

An undefined metric (empty denominator) is reported as None, never as a
made-up 0 or 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage

from . import backend
from .raster_io import CLASS_CODES, IGNORE, LAND, SEDIMENT, LabelMask

_INF_I64 = np.int64(1) << 50


def _edt_sq_numpy(seeds: np.ndarray) -> np.ndarray:
    """Exact squared distance to the nearest True seed, +inf if none.

    Uses the feature transform (nearest-seed coordinates) so the squared
    distance is formed from exact integers; squaring scipy's float
    distances would lose the last bit.
    """
    if not seeds.any():
        return np.full(seeds.shape, np.inf)
    nearest = scipy.ndimage.distance_transform_edt(
        ~seeds, return_distances=False, return_indices=True
    )
    rr, cc = np.indices(seeds.shape)
    dr = rr - nearest[0]
    dc = cc - nearest[1]
    return (dr * dr + dc * dc).astype(np.float64)


if backend.HAS_NUMBA:
    import numba

    @numba.njit(cache=True)
    def _edt_sq_cols(seeds, out):  # pragma: no cover - numba path
        """Column pass: squared row-distance to the nearest seed per column."""
        h, w = seeds.shape
        for c in range(w):
            last = -1
            for r in range(h):
                if seeds[r, c]:
                    out[r, c] = 0
                    last = r
                elif last >= 0:
                    d = np.int64(r - last)
                    out[r, c] = d * d
                else:
                    out[r, c] = _INF_I64
            last = -1
            for r in range(h - 1, -1, -1):
                if seeds[r, c]:
                    last = r
                elif last >= 0:
                    d = np.int64(last - r)
                    dd = d * d
                    if dd < out[r, c]:
                        out[r, c] = dd
        return out

    @numba.njit(cache=True, parallel=True)
    def _edt_sq_rows(col_sq, out):  # pragma: no cover - numba path
        """Row pass: lower envelope of parabolas over the column distances."""
        h, w = col_sq.shape
        for r in numba.prange(h):
            v = np.empty(w, dtype=np.int64)  # parabola sites
            z = np.empty(w + 1, dtype=np.float64)  # envelope boundaries
            k = -1
            for q in range(w):
                fq = col_sq[r, q]
                if fq >= _INF_I64:
                    continue
                while k >= 0:
                    p = v[k]
                    s = (fq + q * q - (col_sq[r, p] + p * p)) / (2.0 * (q - p))
                    if s <= z[k]:
                        k -= 1
                    else:
                        break
                if k < 0:
                    k = 0
                    v[0] = q
                    z[0] = -np.inf
                    z[1] = np.inf
                else:
                    p = v[k]
                    s = (fq + q * q - (col_sq[r, p] + p * p)) / (2.0 * (q - p))
                    k += 1
                    v[k] = q
                    z[k] = s
                    z[k + 1] = np.inf
            if k < 0:
                for c in range(w):
                    out[r, c] = _INF_I64
            else:
                j = 0
                for c in range(w):
                    while z[j + 1] < c:
                        j += 1
                    d = np.int64(c - v[j])
                    out[r, c] = d * d + col_sq[r, v[j]]

    def _edt_sq_numba(seeds: np.ndarray) -> np.ndarray:
        if not seeds.any():
            return np.full(seeds.shape, np.inf)
        col_sq = np.empty(seeds.shape, dtype=np.int64)
        _edt_sq_cols(seeds, col_sq)
        out = np.empty(seeds.shape, dtype=np.int64)
        _edt_sq_rows(col_sq, out)
        result = out.astype(np.float64)
        result[out >= _INF_I64] = np.inf
        return result


def _edt_sq(seeds: np.ndarray) -> np.ndarray:
    if backend.USE_NUMBA:
        return _edt_sq_numba(seeds)
    return _edt_sq_numpy(seeds)


def boundary_distance_map(truth: LabelMask) -> np.ndarray:
    """Per-pixel distance to the nearest differently-labeled pixel.

    Ignore pixels are excluded as targets and get +inf themselves.
    """
    labels = truth.labels
    out = np.full(labels.shape, np.inf)
    for c in CLASS_CODES:
        mine = labels == c
        if not mine.any():
            continue
        seeds = (labels != c) & (labels != IGNORE)
        sq = _edt_sq(seeds)
        out[mine] = np.sqrt(sq[mine])
    return out


def collapse_sediment(mask: LabelMask) -> LabelMask:
    """Relabel sediment as land (idempotent); other codes untouched."""
    labels = mask.labels.copy()
    labels[labels == SEDIMENT] = LAND
    return LabelMask(labels)


def confusion_matrix(
    pred: LabelMask, truth: LabelMask, n_classes: int = 3
) -> np.ndarray:
    """n_classes x n_classes counts, rows = truth, cols = prediction."""
    if pred.labels.shape != truth.labels.shape:
        raise ValueError(
            f"shape mismatch: pred {pred.labels.shape} vs truth {truth.labels.shape}"
        )
    valid = truth.labels != IGNORE
    t = truth.labels[valid].astype(np.int64)
    p = pred.labels[valid].astype(np.int64)
    return np.bincount(
        t * n_classes + p, minlength=n_classes * n_classes
    ).reshape(n_classes, n_classes)


def overall_accuracy(pred: LabelMask, truth: LabelMask) -> float | None:
    """Correct fraction over non-ignore pixels; None if none exist."""
    if pred.labels.shape != truth.labels.shape:
        raise ValueError(
            f"shape mismatch: pred {pred.labels.shape} vs truth {truth.labels.shape}"
        )
    valid = truth.labels != IGNORE
    total = int(valid.sum())
    if total == 0:
        return None
    correct = int((pred.labels[valid] == truth.labels[valid]).sum())
    return correct / total


def boundary_accuracy(
    pred: LabelMask,
    truth: LabelMask,
    d: float,
    distance_map: np.ndarray | None = None,
) -> float | None:
    """Accuracy over non-ignore pixels with boundary distance <= d.

    None when no pixel qualifies (e.g. a uniform truth mask).
    """
    if pred.labels.shape != truth.labels.shape:
        raise ValueError(
            f"shape mismatch: pred {pred.labels.shape} vs truth {truth.labels.shape}"
        )
    if distance_map is None:
        distance_map = boundary_distance_map(truth)
    band = (truth.labels != IGNORE) & (distance_map <= d)
    total = int(band.sum())
    if total == 0:
        return None
    correct = int((pred.labels[band] == truth.labels[band]).sum())
    return correct / total


@dataclass
class ImageReport:
    """Metrics of one prediction/truth pair, with raw counts for pooling."""

    oa: float | None
    ba: dict  # formatted d -> fraction or None
    confusion: np.ndarray
    pixels: int
    ignored: int
    oa_correct: int = 0
    ba_counts: dict = field(default_factory=dict)  # key -> (correct, total)

    def to_json(self) -> dict:
        return {
            "oa": self.oa,
            "ba": dict(self.ba),
            "confusion": self.confusion.tolist(),
            "pixels": self.pixels,
            "ignored": self.ignored,
        }


def _d_key(d: float) -> str:
    return f"{d:g}"


def evaluate_pair(
    pred: LabelMask,
    truth: LabelMask,
    ba_distances=(3.0, 10.0),
    n_classes: int = 3,
) -> ImageReport:
    """All metrics for one image."""
    valid = truth.labels != IGNORE
    pixels = int(valid.sum())
    ignored = int(truth.labels.size - pixels)
    oa = overall_accuracy(pred, truth)
    oa_correct = (
        int((pred.labels[valid] == truth.labels[valid]).sum()) if pixels else 0
    )
    dmap = boundary_distance_map(truth)
    ba = {}
    ba_counts = {}
    for d in ba_distances:
        band = valid & (dmap <= d)
        total = int(band.sum())
        correct = int((pred.labels[band] == truth.labels[band]).sum())
        ba[_d_key(d)] = (correct / total) if total else None
        ba_counts[_d_key(d)] = (correct, total)
    conf = confusion_matrix(pred, truth, n_classes)
    return ImageReport(oa, ba, conf, pixels, ignored, oa_correct, ba_counts)


def aggregate_reports(reports: list[ImageReport]) -> ImageReport:
    """Pixel-pooled aggregate across images (weighted by pixel counts)."""
    if not reports:
        raise ValueError("nothing to aggregate")
    pixels = sum(r.pixels for r in reports)
    ignored = sum(r.ignored for r in reports)
    oa_correct = sum(r.oa_correct for r in reports)
    oa = oa_correct / pixels if pixels else None
    keys = list(reports[0].ba_counts)
    ba = {}
    ba_counts = {}
    for key in keys:
        correct = sum(r.ba_counts[key][0] for r in reports)
        total = sum(r.ba_counts[key][1] for r in reports)
        ba[key] = (correct / total) if total else None
        ba_counts[key] = (correct, total)
    conf = np.sum([r.confusion for r in reports], axis=0)
    return ImageReport(oa, ba, conf, pixels, ignored, oa_correct, ba_counts)
