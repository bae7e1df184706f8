"""Graph active-learning pixel segmentation.

Pixels become non-local-means feature vectors; a KNN similarity graph
connects them; harmonic label propagation classifies them; and an active
learning loop condenses labeled training images into a small
representative set that serves as the entire trained model.
"""

from .backend import active_backend
from .features import FeatureConfig, FeatureMatrix, extract_features
from .graph import GraphConfig, SparseGraph, build_graph, knn_search, normalize_rows
from .labelprop import LabelAssignment, ScoreMatrix, laplace_learning, predict_labels
from .metrics import (
    boundary_accuracy,
    boundary_distance_map,
    collapse_sediment,
    overall_accuracy,
)
from .active import (
    ActiveConfig,
    LoopTrace,
    RepSet,
    active_learning_loop,
    create_repset,
    load_repset,
    save_repset,
)
from .pipeline import (
    PipelineConfig,
    PredictionMap,
    evaluate_split,
    load_config,
    predict_image,
    render_colormap,
)
from .raster_io import (
    DatasetManifest,
    LabelMask,
    RasterPatch,
    SynthConfig,
    generate_synthetic,
    load_labels,
    load_manifest,
    load_patch,
    save_labels,
    save_manifest,
    save_patch,
)
from .sparse_linalg import CsrMatrix, EigenPairs, cg_solve, lanczos_lowest, spmv

__version__ = "0.1.0"
