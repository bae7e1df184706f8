"""Per-pixel neighborhood features.

Each pixel's feature vector is its flattened (2k+1) x (2k+1) x bands
neighborhood, each sample multiplied by a Gaussian weight in the spatial
offset (no normalization to unit sum), with mirror reflection at image
borders (no edge repetition: index -1 maps to 1, index n maps to n-2).

Flattening order is pinned: offsets row-major over (dr, dc), bands
innermost. Feature values are float32; the weight product is computed in
float64 and rounded once.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import backend
from .raster_io import FormatError, RasterPatch

_CACHE_MAGIC = b"GAPF"
_CACHE_HEADER = struct.Struct("<4sBQI")  # magic, version, n u64, dim u32
_PROV_RECORD = struct.Struct("<III")
_FORMAT_VERSION = 1


@dataclass
class FeatureConfig:
    """Neighborhood half-width ``k`` and Gaussian scale ``sigma_g``.

    ``sigma_g`` defaults to k/2. ``np.inf`` is accepted and makes every
    weight exactly 1 (useful to compare against unweighted patches).
    """

    k: int = 3
    sigma_g: float | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.sigma_g is None:
            self.sigma_g = self.k / 2.0
        if not self.sigma_g > 0:
            raise ValueError(f"sigma_g must be > 0, got {self.sigma_g}")

    @property
    def patch_side(self) -> int:
        return 2 * self.k + 1

    def dim(self, bands: int) -> int:
        return self.patch_side**2 * bands


@dataclass(eq=False)
class FeatureMatrix:
    """n x dim float32 feature rows plus per-row (image, row, col) origin."""

    data: np.ndarray
    provenance: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValueError(f"data must be 2-D, got shape {self.data.shape}")
        if self.provenance.shape != (self.data.shape[0], 3):
            raise ValueError(
                f"provenance must be ({self.data.shape[0]}, 3), "
                f"got {self.provenance.shape}"
            )
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        self.provenance = np.ascontiguousarray(self.provenance, dtype=np.uint32)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def reflect_index(i: int, n: int) -> int:
    """Mirror an index into [0, n) without repeating the edge sample.

    -1 -> 1, -2 -> 2, n -> n-2, n+1 -> n-3; in-range indices unchanged.
    A single reflection must suffice (|i| < 2n and i <= 2n-2).
    """
    if 0 <= i < n:
        return i
    if n < 2:
        raise ValueError(f"reflection undefined for extent {n} with index {i}")
    if i < 0:
        j = -i
    else:
        j = 2 * (n - 1) - i
    if not 0 <= j < n:
        raise ValueError(f"index {i} needs more than one reflection for extent {n}")
    return j


def _reflect_array(idx: np.ndarray, n: int) -> np.ndarray:
    out = np.where(idx < 0, -idx, idx)
    return np.where(out >= n, 2 * (n - 1) - out, out)


def gaussian_patch_weights(config: FeatureConfig) -> np.ndarray:
    """(2k+1) x (2k+1) grid of exp(-(dr^2+dc^2) / (2 sigma_g^2))."""
    offs = np.arange(-config.k, config.k + 1, dtype=np.float64)
    sq = offs[:, None] ** 2 + offs[None, :] ** 2
    return np.exp(-sq / (2.0 * float(config.sigma_g) ** 2))


def _extract_numpy(samples: np.ndarray, k: int, weights: np.ndarray) -> np.ndarray:
    h, w, b = samples.shape
    side = 2 * k + 1
    out = np.empty((h * w, side * side * b), dtype=np.float32)
    rows = np.arange(h)
    cols = np.arange(w)
    for oi, dr in enumerate(range(-k, k + 1)):
        rr = _reflect_array(rows + dr, h)
        for oj, dc in enumerate(range(-k, k + 1)):
            cc = _reflect_array(cols + dc, w)
            block = samples[rr[:, None], cc[None, :], :].astype(np.float64)
            block *= weights[oi, oj]
            col0 = (oi * side + oj) * b
            out[:, col0 : col0 + b] = block.reshape(h * w, b).astype(np.float32)
    return out


if backend.HAS_NUMBA:
    import numba

    @numba.njit(cache=True, parallel=True)
    def _extract_numba(samples, k, weights, out):  # pragma: no cover - numba path
        h, w, b = samples.shape
        side = 2 * k + 1
        for pix in numba.prange(h * w):
            r = pix // w
            c = pix % w
            for oi in range(side):
                rr = r + oi - k
                if rr < 0:
                    rr = -rr
                elif rr >= h:
                    rr = 2 * (h - 1) - rr
                for oj in range(side):
                    cc = c + oj - k
                    if cc < 0:
                        cc = -cc
                    elif cc >= w:
                        cc = 2 * (w - 1) - cc
                    wgt = weights[oi, oj]
                    col0 = (oi * side + oj) * b
                    for bb in range(b):
                        out[pix, col0 + bb] = np.float32(
                            wgt * np.float64(samples[rr, cc, bb])
                        )


def extract_features(
    patch: RasterPatch, config: FeatureConfig, image_id: int = 0
) -> FeatureMatrix:
    """Feature matrix of every pixel, rows in row-major pixel order."""
    h, w, b = patch.height, patch.width, patch.bands
    if config.k >= min(h, w):
        raise ValueError(
            f"k={config.k} requires reflection beyond a {h}x{w} image; "
            f"need k < {min(h, w)}"
        )
    weights = gaussian_patch_weights(config)
    if backend.USE_NUMBA:
        out = np.empty((h * w, config.dim(b)), dtype=np.float32)
        _extract_numba(patch.samples, config.k, weights, out)
    else:
        out = _extract_numpy(patch.samples, config.k, weights)
    rr, cc = np.divmod(np.arange(h * w, dtype=np.uint32), np.uint32(w))
    prov = np.column_stack(
        [np.full(h * w, image_id, dtype=np.uint32), rr, cc]
    )
    return FeatureMatrix(out, prov)


def save_feature_cache(features: FeatureMatrix, path) -> None:
    """Write a GAPF cache: header, n*dim float32, n provenance records."""
    parts = [
        _CACHE_HEADER.pack(_CACHE_MAGIC, _FORMAT_VERSION, features.n, features.dim),
        features.data.astype("<f4", copy=False).tobytes(order="C"),
        features.provenance.astype("<u4", copy=False).tobytes(order="C"),
    ]
    Path(path).write_bytes(b"".join(parts))


def load_feature_cache(path) -> FeatureMatrix:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such feature cache: {path}")
    data = path.read_bytes()
    if len(data) < _CACHE_HEADER.size:
        raise FormatError(
            f"truncated header: {len(data)} bytes, need {_CACHE_HEADER.size}",
            path=path,
            offset=len(data),
        )
    magic, version, n, dim = _CACHE_HEADER.unpack_from(data)
    if magic != _CACHE_MAGIC:
        raise FormatError(
            f"bad magic {magic!r}, expected {_CACHE_MAGIC!r}", path=path, offset=0
        )
    if version != _FORMAT_VERSION:
        raise FormatError(
            f"unsupported version {version}, expected {_FORMAT_VERSION}",
            path=path,
            offset=4,
        )
    expected = _CACHE_HEADER.size + 4 * n * dim + _PROV_RECORD.size * n
    if len(data) < expected:
        raise FormatError(
            f"truncated payload: {len(data)} bytes, need {expected}",
            path=path,
            offset=len(data),
        )
    feat = np.frombuffer(data, dtype="<f4", count=n * dim, offset=_CACHE_HEADER.size)
    prov = np.frombuffer(
        data, dtype="<u4", count=3 * n, offset=_CACHE_HEADER.size + 4 * n * dim
    )
    return FeatureMatrix(feat.reshape(n, dim).copy(), prov.reshape(n, 3).copy())
