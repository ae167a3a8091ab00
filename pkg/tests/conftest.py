"""Shared fixtures.  The expensive trained artifacts (15 interpolation
models, intra models, the chroma model) are session-scoped so the unit
tests and the acceptance suite reuse one training run."""

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from lncm.chroma import ChromaHybridRegressor, ChromaInput, boundary_count
from lncm.interp import (QUARTER_POSITIONS, SrcnnLinearRegressor, decimate_pair,
                         derive_filters)
from lncm.intra import IntraFcnRegressor, harvest_blocks
from lncm.tensor_core import Plane


def natural_texture(seed: int, size: int = 192, detail: float = 1.5) -> Plane:
    """Deterministic multi-scale smoothed-noise texture, the desk-scale
    stand-in for natural content."""
    rng = np.random.default_rng(seed)
    img = np.zeros((size, size))
    for sigma, amp in ((detail, 20.0), (4.0, 40.0), (12.0, 60.0)):
        img += amp * gaussian_filter(rng.standard_normal((size, size)), sigma,
                                     mode="wrap")
    return Plane(np.clip(128.0 + img, 0.0, 255.0))


@pytest.fixture(scope="session")
def interp_training_planes():
    planes = [natural_texture(s) for s in (1, 2, 3)]
    planes += [Plane(np.rot90(p.samples, 2).copy()) for p in planes]
    return planes


@pytest.fixture(scope="session")
def holdout_texture():
    return natural_texture(9)


@pytest.fixture(scope="session")
def trained_interp_models(interp_training_planes):
    models = {}
    for pos in QUARTER_POSITIONS:
        pairs = [decimate_pair(p, pos) for p in interp_training_planes]
        reg = SrcnnLinearRegressor(position=pos, epochs=100, learning_rate=0.003,
                                   random_state=0)
        reg.fit([p for p, _ in pairs], [t for _, t in pairs])
        models[pos] = reg.stack_
    return models


@pytest.fixture(scope="session")
def derived_filter_set(trained_interp_models):
    fset, report = derive_filters(trained_interp_models)
    return fset, report


@pytest.fixture(scope="session")
def intra_frames():
    return [natural_texture(s, size=128) for s in (21, 22)]


@pytest.fixture(scope="session")
def trained_intra_models(intra_frames):
    """{n: (regressor, (X_train, Y_train), (X_hold, Y_hold))} for n in 4/8/16."""
    out = {}
    for n, stride in ((4, 8), (8, 10), (16, 14)):
        (x_tr, y_tr), (x_ho, y_ho) = harvest_blocks(intra_frames, n, stride)
        reg = IntraFcnRegressor(hidden=96, epochs=600, learning_rate=0.02,
                                random_state=0).fit(x_tr, y_tr)
        out[n] = (reg, (x_tr, y_tr), (x_ho, y_ho))
    return out


def synthetic_chroma_samples(seed: int, blocks_per_size: int = 24,
                             a: float = 0.6, b: float = 40.0,
                             noise: float = 8.0):
    """Blocks where chroma = a * luma + b plus noise, smooth luma fields
    with natural-content-like per-block contrast."""
    rng = np.random.default_rng(seed)
    samples = []
    for n in (4, 8, 16):
        for _ in range(blocks_per_size):
            field = gaussian_filter(rng.standard_normal((n + 4, n + 4)), 1.5,
                                    mode="wrap")
            field = (field - field.mean()) / (field.std() + 1e-12)
            luma = np.clip(rng.uniform(90.0, 166.0) + 25.0 * field, 0.0, 255.0)
            u_plane = a * luma + b + rng.normal(0, noise, luma.shape)
            v_plane = (1.0 - a) * luma + 0.5 * b + rng.normal(0, noise, luma.shape)
            block = luma[2:2 + n, 2:2 + n]
            rows = [(luma[1, 1], u_plane[1, 1], v_plane[1, 1])]
            for fy in (0, 1):
                for fx in range(2, 2 + n):
                    rows.append((luma[fy, fx], u_plane[fy, fx], v_plane[fy, fx]))
            for fx in (0, 1):
                for fy in range(2, 2 + n):
                    rows.append((luma[fy, fx], u_plane[fy, fx], v_plane[fy, fx]))
            inp = ChromaInput(block, np.array(rows))
            target = np.stack([u_plane[2:2 + n, 2:2 + n], v_plane[2:2 + n, 2:2 + n]])
            samples.append((inp, target))
    return samples


@pytest.fixture(scope="session")
def chroma_dataset():
    return synthetic_chroma_samples(seed=5)


@pytest.fixture(scope="session")
def trained_chroma(chroma_dataset):
    reg = ChromaHybridRegressor(epochs=2000, learning_rate=0.05, ae_epochs=200,
                                random_state=0)
    reg.fit([s for s, _ in chroma_dataset], [t for _, t in chroma_dataset])
    return reg
