"""Raster patches, label masks, dataset manifests, and synthetic scenes.

On-disk formats (all little-endian):

    GAPR patch file:
        magic "GAPR" | version u8=1 | height u32 | width u32 | bands u16
        | dtype u8=0 (float32) | reserved u8=0
        | height*width*bands float32 samples, row-major, pixel-interleaved

    GAPL label file:
        magic "GAPL" | version u8=1 | height u32 | width u32
        | height*width class-code bytes, row-major

    Manifest: UTF-8 JSON array of
        {"patch": path, "labels": path, "split": "train"|"test"}

Class codes: 0=land, 1=water, 2=sediment, 255=ignore. Ignore pixels are
excluded from training selection and from every metric.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import Xoshiro256StarStar

LAND = 0
WATER = 1
SEDIMENT = 2
IGNORE = 255
CLASS_CODES = (LAND, WATER, SEDIMENT)

_PATCH_MAGIC = b"GAPR"
_LABEL_MAGIC = b"GAPL"
_PATCH_HEADER = struct.Struct("<4sBIIHBB")  # 17 bytes
_LABEL_HEADER = struct.Struct("<4sBII")  # 13 bytes
_FORMAT_VERSION = 1


class FormatError(ValueError):
    """A malformed file; ``offset`` is the first offending byte."""

    def __init__(self, message: str, *, path=None, offset: int | None = None):
        if path is not None:
            message = f"{path}: {message}"
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.path = path
        self.offset = offset


@dataclass(eq=False)
class RasterPatch:
    """A height x width x bands grid of float32 samples."""

    samples: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.samples)
        if arr.ndim != 3:
            raise ValueError(f"samples must be (H, W, B), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"all dimensions must be >= 1, got {arr.shape}")
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr.ravel()))[0])
            raise ValueError(f"non-finite sample at flat index {bad}")
        self.samples = arr

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def bands(self) -> int:
        return self.samples.shape[2]

    @property
    def n_pixels(self) -> int:
        return self.height * self.width


@dataclass(eq=False)
class LabelMask:
    """A height x width grid of class codes."""

    labels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.ndim != 2:
            raise ValueError(f"labels must be (H, W), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"all dimensions must be >= 1, got {arr.shape}")
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        valid = np.isin(arr, (LAND, WATER, SEDIMENT, IGNORE))
        if not valid.all():
            flat = int(np.flatnonzero(~valid.ravel())[0])
            code = int(arr.ravel()[flat])
            raise ValueError(
                f"invalid class code {code} at pixel {flat} "
                f"(row {flat // arr.shape[1]}, col {flat % arr.shape[1]})"
            )
        self.labels = arr

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


def save_patch(patch: RasterPatch, path) -> None:
    """Write a patch in GAPR layout."""
    header = _PATCH_HEADER.pack(
        _PATCH_MAGIC, _FORMAT_VERSION, patch.height, patch.width, patch.bands, 0, 0
    )
    payload = patch.samples.astype("<f4", copy=False).tobytes(order="C")
    Path(path).write_bytes(header + payload)


def load_patch(path) -> RasterPatch:
    """Read a GAPR patch file; inverse of :func:`save_patch`."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such patch file: {path}")
    data = path.read_bytes()
    if len(data) < _PATCH_HEADER.size:
        raise FormatError(
            f"truncated header: {len(data)} bytes, need {_PATCH_HEADER.size}",
            path=path,
            offset=len(data),
        )
    magic, version, height, width, bands, dtype, _ = _PATCH_HEADER.unpack_from(data)
    if magic != _PATCH_MAGIC:
        raise FormatError(
            f"bad magic {magic!r}, expected {_PATCH_MAGIC!r}", path=path, offset=0
        )
    if version != _FORMAT_VERSION:
        raise FormatError(
            f"unsupported version {version}, expected {_FORMAT_VERSION}",
            path=path,
            offset=4,
        )
    if dtype != 0:
        raise FormatError(f"unsupported dtype code {dtype}", path=path, offset=15)
    n_samples = height * width * bands
    expected = _PATCH_HEADER.size + 4 * n_samples
    if len(data) < expected:
        raise FormatError(
            f"truncated payload: {len(data)} bytes, need {expected}",
            path=path,
            offset=len(data),
        )
    samples = np.frombuffer(
        data, dtype="<f4", count=n_samples, offset=_PATCH_HEADER.size
    )
    finite = np.isfinite(samples)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise FormatError(
            f"non-finite sample at index {bad}",
            path=path,
            offset=_PATCH_HEADER.size + 4 * bad,
        )
    return RasterPatch(samples.reshape(height, width, bands).copy())


def save_labels(mask: LabelMask, path) -> None:
    """Write a mask in GAPL layout."""
    header = _LABEL_HEADER.pack(_LABEL_MAGIC, _FORMAT_VERSION, mask.height, mask.width)
    Path(path).write_bytes(header + mask.labels.tobytes(order="C"))


def load_labels(path) -> LabelMask:
    """Read a GAPL label file; inverse of :func:`save_labels`."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such label file: {path}")
    data = path.read_bytes()
    if len(data) < _LABEL_HEADER.size:
        raise FormatError(
            f"truncated header: {len(data)} bytes, need {_LABEL_HEADER.size}",
            path=path,
            offset=len(data),
        )
    magic, version, height, width = _LABEL_HEADER.unpack_from(data)
    if magic != _LABEL_MAGIC:
        raise FormatError(
            f"bad magic {magic!r}, expected {_LABEL_MAGIC!r}", path=path, offset=0
        )
    if version != _FORMAT_VERSION:
        raise FormatError(
            f"unsupported version {version}, expected {_FORMAT_VERSION}",
            path=path,
            offset=4,
        )
    expected = _LABEL_HEADER.size + height * width
    if len(data) < expected:
        raise FormatError(
            f"truncated payload: {len(data)} bytes, need {expected}",
            path=path,
            offset=len(data),
        )
    labels = np.frombuffer(
        data, dtype=np.uint8, count=height * width, offset=_LABEL_HEADER.size
    )
    valid = np.isin(labels, (LAND, WATER, SEDIMENT, IGNORE))
    if not valid.all():
        bad = int(np.flatnonzero(~valid)[0])
        raise FormatError(
            f"invalid class code {int(labels[bad])} at pixel {bad}",
            path=path,
            offset=_LABEL_HEADER.size + bad,
        )
    return LabelMask(labels.reshape(height, width).copy())


@dataclass
class ManifestEntry:
    patch: str
    labels: str
    split: str

    def __post_init__(self):
        if self.split not in ("train", "test"):
            raise ValueError(f"split must be 'train' or 'test', got {self.split!r}")


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    class_count: int = 3

    def __post_init__(self):
        patches = [e.patch for e in self.entries]
        labels = [e.labels for e in self.entries]
        if len(set(patches)) != len(patches) or len(set(labels)) != len(labels):
            raise ValueError("manifest paths must be unique")

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]


def save_manifest(manifest: DatasetManifest, path) -> None:
    payload = [
        {"patch": e.patch, "labels": e.labels, "split": e.split}
        for e in manifest.entries
    ]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    raw = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise ValueError(f"{path}: manifest must be a JSON array")
    entries = []
    for i, item in enumerate(raw):
        extra = set(item) - {"patch", "labels", "split"}
        if extra:
            raise ValueError(f"{path}: entry {i} has unknown keys {sorted(extra)}")
        entries.append(ManifestEntry(item["patch"], item["labels"], item["split"]))
    return DatasetManifest(entries)


def load_pair(entry: ManifestEntry, base_dir=None) -> tuple[RasterPatch, LabelMask]:
    """Load a manifest entry's patch and mask, checking dimension agreement."""
    base = Path(base_dir) if base_dir is not None else Path(".")
    patch = load_patch(base / entry.patch)
    mask = load_labels(base / entry.labels)
    if (patch.height, patch.width) != (mask.height, mask.width):
        raise ValueError(
            f"dimension mismatch: patch {patch.height}x{patch.width} vs "
            f"mask {mask.height}x{mask.width} for {entry.patch}"
        )
    return patch, mask


def _default_class_means() -> np.ndarray:
    # Rough 6-band reflectance profiles: land (vegetated/soil, NIR bump),
    # water (dark, falls off in NIR), bright wet sediment.
    return np.array(
        [
            [0.18, 0.20, 0.22, 0.35, 0.30, 0.25],  # land
            [0.10, 0.12, 0.14, 0.05, 0.03, 0.02],  # water
            [0.30, 0.32, 0.35, 0.40, 0.38, 0.36],  # sediment
        ],
        dtype=np.float64,
    )


@dataclass
class SynthConfig:
    """Parameters of the synthetic river scene generator.

    A sinusoidal water channel crosses the image left to right, flanked
    by sediment strips, the remainder land; per-pixel samples are the
    class mean plus i.i.d. Gaussian band noise.
    """

    height: int = 64
    width: int = 64
    bands: int = 6
    class_means: np.ndarray = field(default_factory=_default_class_means)
    noise_sigma: float = 0.08
    channel_amplitude: float = 8.0
    channel_period: float = 64.0
    channel_halfwidth: float = 6.0
    sediment_halfwidth: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.bands < 1:
            raise ValueError("height, width, bands must be >= 1")
        means = np.asarray(self.class_means, dtype=np.float64)
        if means.shape != (3, self.bands):
            raise ValueError(
                f"class_means must be (3, {self.bands}), got {means.shape}"
            )
        for a in range(3):
            for b in range(a + 1, 3):
                if np.array_equal(means[a], means[b]):
                    raise ValueError(f"class means {a} and {b} are identical")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.channel_halfwidth <= 0 or self.sediment_halfwidth <= 0:
            raise ValueError("halfwidths must be > 0")
        if self.channel_period <= 0:
            raise ValueError("channel_period must be > 0")
        self.class_means = means


def generate_synthetic(config: SynthConfig) -> tuple[RasterPatch, LabelMask]:
    """Deterministic synthetic scene: same config, bit-identical output.

    Stream layout is pinned: one uniform draw for the channel phase, then
    height*width*bands normals in row-major, band-innermost order.
    """
    h, w, b = config.height, config.width, config.bands
    if 2.0 * config.channel_halfwidth >= h:
        raise ValueError(
            f"degenerate geometry: channel width {2 * config.channel_halfwidth} "
            f"covers the full image height {h}"
        )
    gen = Xoshiro256StarStar(config.seed)
    phase = gen.uniform01() * 2.0 * np.pi

    cols = np.arange(w, dtype=np.float64)
    center = (h - 1) / 2.0 + config.channel_amplitude * np.sin(
        2.0 * np.pi * cols / config.channel_period + phase
    )
    rows = np.arange(h, dtype=np.float64)
    dist = np.abs(rows[:, None] - center[None, :])

    labels = np.full((h, w), LAND, dtype=np.uint8)
    labels[dist <= config.channel_halfwidth + config.sediment_halfwidth] = SEDIMENT
    labels[dist <= config.channel_halfwidth] = WATER

    noise = gen.normal(h * w * b).reshape(h, w, b)
    means = config.class_means[labels]  # (h, w, bands)
    samples = (means + config.noise_sigma * noise).astype(np.float32)
    return RasterPatch(samples), LabelMask(labels)
