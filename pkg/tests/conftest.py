import numpy as np
import pytest

from gapseg.graph import GraphConfig, build_graph, normalize_rows
from gapseg.raster_io import (
    DatasetManifest,
    ManifestEntry,
    SynthConfig,
    generate_synthetic,
    save_labels,
    save_patch,
)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def small_synth_config(seed, size=16):
    """A synthetic scene scaled down to a tiny image."""
    return SynthConfig(
        height=size,
        width=size,
        seed=seed,
        channel_amplitude=2.0,
        channel_period=float(size),
        channel_halfwidth=2.5,
        sediment_halfwidth=1.5,
    )


def write_small_dataset(tmp_path, n_train=2, n_test=1, size=16):
    """Tiny on-disk dataset; returns its manifest."""
    entries = []
    for i in range(n_train + n_test):
        split = "train" if i < n_train else "test"
        patch, mask = generate_synthetic(small_synth_config(seed=i, size=size))
        pname, lname = f"im{i}.gapr", f"im{i}.gapl"
        save_patch(patch, tmp_path / pname)
        save_labels(mask, tmp_path / lname)
        entries.append(ManifestEntry(pname, lname, split))
    return DatasetManifest(entries)


def random_knn_graph(n, rng, K=5, d=4):
    """Small random KNN graph for solver/propagation tests."""
    X = rng.standard_normal((n, d))
    normalized, zero_mask = normalize_rows(X)
    return build_graph(normalized, GraphConfig(K=K), zero_mask)


def make_connected_graph(n, rng, K=5, d=4, max_tries=20):
    """Random KNN graph, resampled until connected."""
    from gapseg.labelprop import _reachable_from

    for _ in range(max_tries):
        g = random_knn_graph(n, rng, K=K, d=d)
        if _reachable_from(g.W, np.array([0])).all():
            return g
    raise RuntimeError("could not draw a connected graph")
