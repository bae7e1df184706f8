"""Active selection of a representative training set.

Per training image: extract pixel features, build the similarity graph
once, seed a class-balanced initial set, then repeatedly (1) propagate
the current labels, (2) measure accuracy a_t on the remaining nodes,
(3) stop when |a_t - a_{t-1}| < epsilon or the acquisition budget k_max
is spent, (4) otherwise label the candidate with the highest acquisition
score. The union of the per-image selections is the representative set,
which is the entire trained model.

The model-change score of candidate k with pseudo-label y_k = argmax of
its score row u_k is

    A(k) = ||e_{y_k} - u_k|| * ||C e_k|| / (gamma^2 + C_kk)

where C is the rank-m spectral surrogate V diag(1/(lambda_j + tau^2)) V'
built from the m lowest Laplacian eigenpairs: the estimated norm of the
classifier change if k were labeled with its own pseudo-label.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import FeatureConfig, FeatureMatrix, extract_features
from .graph import GraphConfig, SparseGraph, build_graph, normalize_rows
from .labelprop import LabelAssignment, ScoreMatrix, laplace_learning, predict_labels
from .raster_io import (
    CLASS_CODES,
    IGNORE,
    DatasetManifest,
    FormatError,
    load_pair,
)
from .rng import Xoshiro256StarStar, derive_seed
from .sparse_linalg import EigenPairs, lanczos_lowest

logger = logging.getLogger(__name__)

PHASE_INIT = 0
PHASE_ACQUIRED = 1

ACQUISITIONS = ("model-change", "uncertainty", "random")

_REPSET_MAGIC = b"GAPS"
_REPSET_HEADER = struct.Struct("<4sBII")  # magic, version, count u32, dim u32
_FORMAT_VERSION = 1

STOP_EPSILON = "epsilon"
STOP_KMAX = "k_max"


@dataclass
class ActiveConfig:
    """Budget, termination, and acquisition parameters."""

    n0: int = 10
    epsilon: float = 1e-3
    k_max: int = 100
    acquisition: str = "model-change"
    gamma: float = 0.1
    tau: float = 0.1
    m: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.n0 < 1:
            raise ValueError(f"n0 must be >= 1, got {self.n0}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.k_max < 0:
            raise ValueError(f"k_max must be >= 0, got {self.k_max}")
        if self.acquisition not in ACQUISITIONS:
            raise ValueError(
                f"acquisition must be one of {ACQUISITIONS}, got {self.acquisition!r}"
            )
        if not (self.gamma > 0 and self.tau > 0):
            raise ValueError("gamma and tau must be > 0")
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")


@dataclass
class IterationRecord:
    t: int
    chosen: int | None
    score: float | None
    accuracy: float
    solver_converged: bool = True


@dataclass
class LoopTrace:
    records: list[IterationRecord] = field(default_factory=list)
    stop_reason: str = ""

    @property
    def accuracies(self) -> list[float]:
        return [r.accuracy for r in self.records]

    def to_json(self) -> dict:
        return {
            "stop_reason": self.stop_reason,
            "iterations": [
                {
                    "t": r.t,
                    "chosen": r.chosen,
                    "score": r.score,
                    "accuracy": r.accuracy,
                    "solver_converged": r.solver_converged,
                }
                for r in self.records
            ],
        }


@dataclass(eq=False)
class RepSet:
    """Selected (feature vector, class, origin) records; the trained model."""

    vectors: np.ndarray  # (N, D) float32
    classes: np.ndarray  # (N,) uint8 in {0, 1, 2}
    provenance: np.ndarray  # (N, 3) uint32: image-id, row, col
    phases: np.ndarray  # (N,) uint8: 0=init, 1=acquired

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        self.classes = np.ascontiguousarray(self.classes, dtype=np.uint8)
        self.provenance = np.ascontiguousarray(self.provenance, dtype=np.uint32)
        self.phases = np.ascontiguousarray(self.phases, dtype=np.uint8)
        n = self.vectors.shape[0]
        if not (
            self.classes.shape == (n,)
            and self.provenance.shape == (n, 3)
            and self.phases.shape == (n,)
        ):
            raise ValueError("inconsistent record array lengths")
        if not np.isin(self.classes, CLASS_CODES).all():
            raise ValueError("repset classes must be in {0, 1, 2}")
        if np.unique(self.provenance, axis=0).shape[0] != n:
            raise ValueError("repset (image, row, col) origins must be unique")

    @property
    def size(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])


def save_repset(repset: RepSet, path) -> None:
    """Write GAPS layout: header then per-record class, phase, origin, vector."""
    parts = [
        _REPSET_HEADER.pack(_REPSET_MAGIC, _FORMAT_VERSION, repset.size, repset.dim)
    ]
    rec = struct.Struct("<BBIII")
    for i in range(repset.size):
        parts.append(
            rec.pack(
                int(repset.classes[i]),
                int(repset.phases[i]),
                int(repset.provenance[i, 0]),
                int(repset.provenance[i, 1]),
                int(repset.provenance[i, 2]),
            )
        )
        parts.append(repset.vectors[i].astype("<f4", copy=False).tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_repset(path) -> RepSet:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such repset file: {path}")
    data = path.read_bytes()
    if len(data) < _REPSET_HEADER.size:
        raise FormatError(
            f"truncated header: {len(data)} bytes, need {_REPSET_HEADER.size}",
            path=path,
            offset=len(data),
        )
    magic, version, count, dim = _REPSET_HEADER.unpack_from(data)
    if magic != _REPSET_MAGIC:
        raise FormatError(
            f"bad magic {magic!r}, expected {_REPSET_MAGIC!r}", path=path, offset=0
        )
    if version != _FORMAT_VERSION:
        raise FormatError(
            f"unsupported version {version}, expected {_FORMAT_VERSION}",
            path=path,
            offset=4,
        )
    rec = struct.Struct("<BBIII")
    rec_size = rec.size + 4 * dim
    expected = _REPSET_HEADER.size + count * rec_size
    if len(data) < expected:
        raise FormatError(
            f"truncated payload: {len(data)} bytes, need {expected}",
            path=path,
            offset=len(data),
        )
    vectors = np.empty((count, dim), dtype=np.float32)
    classes = np.empty(count, dtype=np.uint8)
    provenance = np.empty((count, 3), dtype=np.uint32)
    phases = np.empty(count, dtype=np.uint8)
    off = _REPSET_HEADER.size
    for i in range(count):
        cls, phase, img, row, col = rec.unpack_from(data, off)
        classes[i] = cls
        phases[i] = phase
        provenance[i] = (img, row, col)
        vectors[i] = np.frombuffer(data, dtype="<f4", count=dim, offset=off + rec.size)
        off += rec_size
    return RepSet(vectors, classes, provenance, phases)


def init_repset(
    node_labels: np.ndarray, n0: int, rng: Xoshiro256StarStar
) -> list[int]:
    """Class-balanced random seed set: min(n0, available) nodes per class.

    ``node_labels`` holds the ground-truth code of every node; ignore
    nodes are never selected. Classes are visited in ascending code
    order; within a class, indices appear in draw order.
    """
    node_labels = np.asarray(node_labels)
    selected: list[int] = []
    present = [c for c in CLASS_CODES if np.any(node_labels == c)]
    if not present:
        raise ValueError("no labelable nodes: every node is ignore-coded")
    for c in present:
        pool = np.flatnonzero(node_labels == c)
        take = min(n0, pool.size)
        picks = rng.sample_without_replacement(pool.size, take)
        selected.extend(int(pool[p]) for p in picks)
    return selected


def acquisition_mc(
    scores: ScoreMatrix,
    eig: EigenPairs,
    candidates: np.ndarray,
    gamma: float,
    tau: float,
) -> np.ndarray:
    """Model-change score per candidate (see module docstring)."""
    U = scores.U
    if eig.eigenvectors.shape[0] != U.shape[0]:
        raise ValueError(
            f"eigenpairs are for a {eig.eigenvectors.shape[0]}-node graph, "
            f"scores are for {U.shape[0]} nodes"
        )
    cand = np.asarray(candidates, dtype=np.int64)
    Uc = U[cand]
    pseudo = np.argmax(Uc, axis=1)
    resid = Uc.copy()
    resid[np.arange(cand.size), pseudo] -= 1.0
    resid_norm = np.sqrt((resid * resid).sum(axis=1))

    inv = 1.0 / (eig.eigenvalues + tau * tau)
    Vc = eig.eigenvectors[cand]
    col_norm = np.sqrt(((Vc * inv) ** 2).sum(axis=1))
    c_kk = ((Vc * Vc) * inv).sum(axis=1)
    return resid_norm * col_norm / (gamma * gamma + c_kk)


def acquisition_uncertainty(scores: ScoreMatrix, candidates: np.ndarray) -> np.ndarray:
    """1 - (top score - runner-up score): higher means less confident."""
    Uc = scores.U[np.asarray(candidates, dtype=np.int64)]
    top2 = np.partition(Uc, Uc.shape[1] - 2, axis=1)[:, -2:]
    return 1.0 - (top2[:, 1] - top2[:, 0])


def acquisition_random(
    candidates: np.ndarray, rng: Xoshiro256StarStar
) -> np.ndarray:
    """Uniform scores; argmax then picks a uniformly random candidate."""
    return rng.uniform01(np.asarray(candidates).size)


def active_learning_loop(
    graph: SparseGraph,
    node_labels: np.ndarray,
    initial: list[int],
    config: ActiveConfig,
    eig: EigenPairs | None = None,
    rng: Xoshiro256StarStar | None = None,
    n_classes: int = 3,
    cg_tol: float = 1e-10,
) -> tuple[list[int], list[int], LoopTrace]:
    """Grow ``initial`` one acquisition at a time until termination.

    Returns (selected node indices in selection order, per-node phase
    codes, trace). The graph and eigenpairs are built once by the caller
    and reused across iterations; scores warm-start each solve.
    """
    node_labels = np.asarray(node_labels)
    n = graph.n
    if not initial:
        raise ValueError("initial representative set must be nonempty")
    if rng is None:
        rng = Xoshiro256StarStar(config.seed)
    if config.acquisition == "model-change" and eig is None:
        eig = lanczos_lowest(graph.L, min(config.m, n), seed=config.seed)

    selected = list(initial)
    phases = [PHASE_INIT] * len(initial)
    in_set = np.zeros(n, dtype=bool)
    in_set[initial] = True
    evaluable = node_labels != IGNORE

    trace = LoopTrace()
    prev_acc: float | None = None
    warm: np.ndarray | None = None
    t = 0
    while True:
        labels = LabelAssignment.from_codes(
            np.asarray(selected, dtype=np.int64),
            node_labels[selected],
            n_classes,
        )
        scores = laplace_learning(graph, labels, cg_tol=cg_tol, warm_start=warm)
        warm = scores.U
        solver_ok = all(ok for (_, _, _, ok) in scores.solves)
        if not solver_ok:
            logger.warning("CG did not converge at iteration %d: %s", t, scores.solves)

        candidates = np.flatnonzero(evaluable & ~in_set)
        preds = predict_labels(scores)
        if candidates.size:
            acc = float(np.mean(preds[candidates] == node_labels[candidates]))
        else:
            acc = 1.0

        if t >= 1 and prev_acc is not None and abs(acc - prev_acc) < config.epsilon:
            trace.records.append(IterationRecord(t, None, None, acc, solver_ok))
            trace.stop_reason = STOP_EPSILON
            break
        if t >= config.k_max or candidates.size == 0:
            trace.records.append(IterationRecord(t, None, None, acc, solver_ok))
            trace.stop_reason = STOP_KMAX
            break

        if config.acquisition == "model-change":
            acq = acquisition_mc(scores, eig, candidates, config.gamma, config.tau)
        elif config.acquisition == "uncertainty":
            acq = acquisition_uncertainty(scores, candidates)
        else:
            acq = acquisition_random(candidates, rng)
        best = int(np.argmax(acq))  # first max: ties to lowest node index
        chosen = int(candidates[best])
        trace.records.append(
            IterationRecord(t, chosen, float(acq[best]), acc, solver_ok)
        )
        selected.append(chosen)
        phases.append(PHASE_ACQUIRED)
        in_set[chosen] = True
        prev_acc = acc
        t += 1

    return selected, phases, trace


def create_repset(
    manifest: DatasetManifest,
    feature_config: FeatureConfig,
    graph_config: GraphConfig,
    active_config: ActiveConfig,
    base_dir=None,
    eig_tol: float = 1e-6,
    eig_max_basis: int | None = None,
    cg_tol: float = 1e-10,
) -> tuple[RepSet, list[LoopTrace]]:
    """Run the per-image selection loop over the train split and take the
    union of the selections, preserving manifest order."""
    train = manifest.split("train")
    if not train:
        raise ValueError("manifest has no train entries")

    vec_parts, cls_parts, prov_parts, phase_parts = [], [], [], []
    traces = []
    for img_id, entry in enumerate(manifest.entries):
        if entry.split != "train":
            continue
        patch, mask = load_pair(entry, base_dir)
        feats = extract_features(patch, feature_config, image_id=img_id)
        node_labels = mask.labels.ravel()

        present = np.unique(node_labels[node_labels != IGNORE])
        if present.size == 1:
            logger.warning(
                "%s: only class %d present; initialization degenerates",
                entry.patch,
                int(present[0]),
            )

        normalized, zero_mask = normalize_rows(feats.data)
        graph = build_graph(normalized, graph_config, zero_mask)
        eig = None
        if active_config.acquisition == "model-change":
            eig = lanczos_lowest(
                graph.L,
                min(active_config.m, graph.n),
                tol=eig_tol,
                seed=active_config.seed,
                max_basis=eig_max_basis,
            )
        rng = Xoshiro256StarStar(derive_seed(active_config.seed, img_id))
        initial = init_repset(node_labels, active_config.n0, rng)
        selected, phases, trace = active_learning_loop(
            graph,
            node_labels,
            initial,
            active_config,
            eig=eig,
            rng=rng,
            cg_tol=cg_tol,
        )
        traces.append(trace)
        sel = np.asarray(selected, dtype=np.int64)
        vec_parts.append(feats.data[sel])
        cls_parts.append(node_labels[sel].astype(np.uint8))
        prov_parts.append(feats.provenance[sel])
        phase_parts.append(np.asarray(phases, dtype=np.uint8))

    repset = RepSet(
        np.concatenate(vec_parts, axis=0),
        np.concatenate(cls_parts),
        np.concatenate(prov_parts, axis=0),
        np.concatenate(phase_parts),
    )
    return repset, traces
