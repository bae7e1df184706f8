"""End-to-end flows: build the representative set from the train split,
segment unlabeled images by grafting the representative set into each
image's graph, evaluate, and render color maps.

Config files are UTF-8 JSON mirroring :class:`PipelineConfig`; every
field is optional (defaults apply) and unknown keys are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .active import ActiveConfig, RepSet, create_repset
from .features import FeatureConfig, extract_features
from .graph import GraphConfig, build_graph, normalize_rows
from .labelprop import LabelAssignment, laplace_learning, predict_labels
from .metrics import (
    ImageReport,
    aggregate_reports,
    collapse_sediment,
    evaluate_pair,
)
from .raster_io import (
    IGNORE,
    LAND,
    SEDIMENT,
    WATER,
    DatasetManifest,
    LabelMask,
    ManifestEntry,
    RasterPatch,
    SynthConfig,
    generate_synthetic,
    load_pair,
    save_labels,
    save_manifest,
    save_patch,
)

# Fig-style palette: land purple, water blue, sediment yellow, ignore black.
PALETTE = {
    LAND: (128, 0, 128),
    WATER: (0, 0, 255),
    SEDIMENT: (255, 255, 0),
    IGNORE: (0, 0, 0),
}


@dataclass
class SolverConfig:
    """Tolerances for the linear and eigen solvers used by the pipeline."""

    cg_tol: float = 1e-10
    cg_max_iter: int | None = None
    eig_tol: float = 1e-6
    eig_max_basis: int | None = None

    def __post_init__(self):
        if not self.cg_tol > 0 or not self.eig_tol > 0:
            raise ValueError("solver tolerances must be > 0")


@dataclass
class PipelineConfig:
    feature: FeatureConfig = field(default_factory=FeatureConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    active: ActiveConfig = field(default_factory=ActiveConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    ba_distances: tuple = (3.0, 10.0)
    collapse_sediment: bool = False


_SECTION_FIELDS = {
    "feature": ("k", "sigma_g"),
    "graph": ("K", "alpha", "min_scale"),
    "active": (
        "n0",
        "epsilon",
        "k_max",
        "acquisition",
        "gamma",
        "tau",
        "m",
        "seed",
    ),
    "solver": ("cg_tol", "cg_max_iter", "eig_tol", "eig_max_basis"),
}
_TOP_FIELDS = set(_SECTION_FIELDS) | {"ba_distances", "collapse_sediment"}
_SECTION_TYPES = {
    "feature": FeatureConfig,
    "graph": GraphConfig,
    "active": ActiveConfig,
    "solver": SolverConfig,
}


def config_from_dict(raw: dict) -> PipelineConfig:
    """Build a config from parsed JSON, rejecting unknown keys."""
    unknown = set(raw) - _TOP_FIELDS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for section, fields in _SECTION_FIELDS.items():
        sub = raw.get(section, {})
        if not isinstance(sub, dict):
            raise ValueError(f"config section {section!r} must be an object")
        extra = set(sub) - set(fields)
        if extra:
            raise ValueError(f"unknown keys in {section!r}: {sorted(extra)}")
        kwargs[section] = _SECTION_TYPES[section](**sub)
    if "ba_distances" in raw:
        ds = raw["ba_distances"]
        if not isinstance(ds, list) or not all(
            isinstance(d, (int, float)) for d in ds
        ):
            raise ValueError("ba_distances must be a list of numbers")
        kwargs["ba_distances"] = tuple(float(d) for d in ds)
    if "collapse_sediment" in raw:
        if not isinstance(raw["collapse_sediment"], bool):
            raise ValueError("collapse_sediment must be a boolean")
        kwargs["collapse_sediment"] = raw["collapse_sediment"]
    return PipelineConfig(**kwargs)


def load_config(path=None) -> PipelineConfig:
    """Load a JSON config file; None gives all defaults."""
    if path is None:
        return PipelineConfig()
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return config_from_dict(raw)


@dataclass(eq=False)
class PredictionMap:
    """Predicted class grid plus per-pixel winning score."""

    classes: np.ndarray  # (H, W) uint8
    confidence: np.ndarray  # (H, W) float32 in [0, 1]

    def __post_init__(self):
        if self.classes.shape != self.confidence.shape:
            raise ValueError("classes and confidence shapes differ")

    def to_mask(self) -> LabelMask:
        return LabelMask(self.classes.copy())


def predict_image(
    repset: RepSet, patch: RasterPatch, config: PipelineConfig
) -> PredictionMap:
    """Segment one image by harmonic propagation from the repset.

    The graph is built over one joint point cloud: repset rows first,
    then the image's pixels in row-major order.
    """
    feats = extract_features(patch, config.feature)
    if feats.dim != repset.dim:
        raise ValueError(
            f"repset dimension {repset.dim} does not match feature "
            f"dimension {feats.dim} (k={config.feature.k}, bands={patch.bands})"
        )
    stacked = np.concatenate([repset.vectors, feats.data], axis=0)
    normalized, zero_mask = normalize_rows(stacked)
    graph = build_graph(normalized, config.graph, zero_mask)
    labels = LabelAssignment.from_codes(
        np.arange(repset.size, dtype=np.int64), repset.classes, 3
    )
    scores = laplace_learning(
        graph,
        labels,
        cg_tol=config.solver.cg_tol,
        cg_max_iter=config.solver.cg_max_iter,
    )
    pixel_scores = scores.U[repset.size :]
    codes = predict_labels_from_rows(pixel_scores)
    conf = np.clip(pixel_scores.max(axis=1), 0.0, 1.0).astype(np.float32)
    h, w = patch.height, patch.width
    return PredictionMap(codes.reshape(h, w), conf.reshape(h, w))


def predict_labels_from_rows(rows: np.ndarray) -> np.ndarray:
    """Argmax class codes from raw score rows (ties to lowest code)."""
    return np.argmax(rows, axis=1).astype(np.uint8)


def evaluate_split(
    manifest: DatasetManifest,
    repset: RepSet,
    config: PipelineConfig,
    base_dir=None,
    split: str = "test",
) -> dict:
    """Predict and score every image of a manifest split.

    With ``config.collapse_sediment`` set, sediment is folded into land
    on both the prediction and the truth before scoring. Returns the JSON
    report structure: per-image entries plus a pixel-pooled aggregate.
    """
    entries = manifest.split(split)
    if not entries:
        raise ValueError(f"manifest has no {split!r} entries")
    per_image: list[ImageReport] = []
    names = []
    for entry in entries:
        patch, truth = load_pair(entry, base_dir)
        pred = predict_image(repset, patch, config).to_mask()
        if config.collapse_sediment:
            pred = collapse_sediment(pred)
            truth = collapse_sediment(truth)
        per_image.append(
            evaluate_pair(pred, truth, config.ba_distances, manifest.class_count)
        )
        names.append(entry.patch)
    aggregate = aggregate_reports(per_image)
    return {
        "images": [
            {"patch": name, **report.to_json()}
            for name, report in zip(names, per_image)
        ],
        "aggregate": aggregate.to_json(),
    }


def save_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")


def render_colormap(labels: np.ndarray | LabelMask | PredictionMap) -> bytes:
    """Binary PPM (P6) image of a class grid using the fixed palette."""
    if isinstance(labels, PredictionMap):
        grid = labels.classes
    elif isinstance(labels, LabelMask):
        grid = labels.labels
    else:
        grid = np.asarray(labels)
    h, w = grid.shape
    lut = np.zeros((256, 3), dtype=np.uint8)
    for code, rgb in PALETTE.items():
        lut[code] = rgb
    rgb = lut[grid]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + rgb.tobytes(order="C")


@dataclass
class SynthDatasetConfig:
    """Config of the ``synth`` command: scene parameters plus counts.

    Image i (train images first, then test) uses seed ``base_seed + i``.
    """

    n_train: int = 8
    n_test: int = 4
    base_seed: int = 0
    height: int = 64
    width: int = 64
    bands: int = 6
    noise_sigma: float = 0.08
    channel_amplitude: float = 8.0
    channel_period: float = 64.0
    channel_halfwidth: float = 6.0
    sediment_halfwidth: float = 3.0
    class_means: list | None = None

    def __post_init__(self):
        if self.n_train < 1 or self.n_test < 0:
            raise ValueError("need n_train >= 1 and n_test >= 0")

    def scene_config(self, seed: int) -> SynthConfig:
        kwargs = dict(
            height=self.height,
            width=self.width,
            bands=self.bands,
            noise_sigma=self.noise_sigma,
            channel_amplitude=self.channel_amplitude,
            channel_period=self.channel_period,
            channel_halfwidth=self.channel_halfwidth,
            sediment_halfwidth=self.sediment_halfwidth,
            seed=seed,
        )
        if self.class_means is not None:
            kwargs["class_means"] = np.asarray(self.class_means, dtype=np.float64)
        return SynthConfig(**kwargs)


def synth_config_from_dict(raw: dict) -> SynthDatasetConfig:
    known = {
        "n_train",
        "n_test",
        "base_seed",
        "height",
        "width",
        "bands",
        "noise_sigma",
        "channel_amplitude",
        "channel_period",
        "channel_halfwidth",
        "sediment_halfwidth",
        "class_means",
    }
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown synth config keys: {sorted(unknown)}")
    return SynthDatasetConfig(**raw)


def run_synth(config: SynthDatasetConfig, out_dir) -> Path:
    """Write GAPR/GAPL pairs plus a manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(config.n_train + config.n_test):
        split = "train" if i < config.n_train else "test"
        idx = i if split == "train" else i - config.n_train
        patch, mask = generate_synthetic(config.scene_config(config.base_seed + i))
        patch_name = f"{split}_{idx:03d}.gapr"
        label_name = f"{split}_{idx:03d}.gapl"
        save_patch(patch, out / patch_name)
        save_labels(mask, out / label_name)
        entries.append(ManifestEntry(patch_name, label_name, split))
    manifest = DatasetManifest(entries)
    manifest_path = out / "manifest.json"
    save_manifest(manifest, manifest_path)
    return manifest_path


def build_repset(
    manifest: DatasetManifest, config: PipelineConfig, base_dir=None
) -> tuple[RepSet, list]:
    """Run the full representative-set construction with pipeline solver
    settings; thin wrapper over :func:`gapseg.active.create_repset`."""
    return create_repset(
        manifest,
        config.feature,
        config.graph,
        config.active,
        base_dir=base_dir,
        eig_tol=config.solver.eig_tol,
        eig_max_basis=config.solver.eig_max_basis,
        cg_tol=config.solver.cg_tol,
    )
