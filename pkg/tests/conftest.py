import numpy as np
import pytest

from ivegan.data import write_idx
from ivegan.model import create_model, create_vanilla, ring_architecture

RING_SMOKE_YAML = """\
experiment: ring
method: {method}
output_dir: {out}
model:
  hidden: [8]
train:
  iterations: {iterations}
  batch_size: 16
  seed: 3
  snapshot_every: {snapshot_every}
  snapshot_samples: 1000
  checkpoint_every: {checkpoint_every}
  log_every: 0
"""


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_arch():
    return ring_architecture(z_dim=2, zprime_dim=4, hidden=8)


@pytest.fixture
def tiny_model(tiny_arch):
    return create_model(tiny_arch, np.random.default_rng(0))


@pytest.fixture
def tiny_vanilla(tiny_arch):
    return create_vanilla(tiny_arch, np.random.default_rng(0))


@pytest.fixture
def idx_pair(tmp_path):
    """40 random 28x28 digits with labels cycling 0..9."""
    gen = np.random.default_rng(7)
    images = gen.integers(0, 256, size=(40, 28, 28), dtype=np.uint8)
    labels = (np.arange(40) % 10).astype(np.uint8)
    img_path = tmp_path / "images-idx3-ubyte"
    lbl_path = tmp_path / "labels-idx1-ubyte"
    write_idx(img_path, lbl_path, images, labels)
    return img_path, lbl_path, images, labels


@pytest.fixture
def write_ring_config(tmp_path):
    def write(name="ring.yaml", method="ivegan", iterations=4, snapshot_every=2, checkpoint_every=2, out=None):
        out = out or tmp_path / "run"
        path = tmp_path / name
        path.write_text(
            RING_SMOKE_YAML.format(
                method=method,
                out=out,
                iterations=iterations,
                snapshot_every=snapshot_every,
                checkpoint_every=checkpoint_every,
            )
        )
        return path

    return write


@pytest.fixture(autouse=True)
def _reset_ivegan_logger():
    """Drop handlers bound to a previous test's (now closed) captured stderr."""
    import logging

    yield
    logger = logging.getLogger("ivegan")
    for handler in list(logger.handlers):
        if type(handler) is logging.StreamHandler:
            logger.removeHandler(handler)
    logger.propagate = True
