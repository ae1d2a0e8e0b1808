"""Training data: the ring-of-Gaussians mixture and IDX raster datasets."""
from __future__ import annotations

import gzip
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Optional, Tuple, Union

import numpy as np

from .errors import IdxFormatError, ShapeError

log = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

PathLike = Union[str, Path]


@dataclass(frozen=True)
class RingSpec:
    """n_modes isotropic Gaussians N(mu_k, sigma^2 I) with means on a circle."""

    n_modes: int = 8
    radius: float = 0.9
    sigma: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError(f"n_modes must be >= 1, got {self.n_modes}")
        if not self.radius > 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")

    @property
    def covariance(self) -> np.ndarray:
        return self.sigma**2 * np.eye(2)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def ring_means(spec: RingSpec) -> np.ndarray:
    angles = 2.0 * math.pi * np.arange(spec.n_modes) / spec.n_modes
    return spec.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def sample_ring(
    spec: RingSpec, n: int, rng: np.random.Generator, return_modes: bool = False
) -> Union[np.ndarray, Tuple[np.ndarray, np.ndarray]]:
    """Uniform mode choice, then an isotropic Gaussian around that mode's mean."""
    if n < 0:
        raise ValueError(f"sample count must be >= 0, got {n}")
    modes = rng.integers(0, spec.n_modes, size=n)
    x = ring_means(spec)[modes] + spec.sigma * rng.standard_normal((n, 2))
    if return_modes:
        return x, modes
    return x


@dataclass(frozen=True, eq=False)
class LabeledImages:
    images: np.ndarray  # (n, h, w), values in [0, 1]
    labels: np.ndarray  # (n,)

    def __post_init__(self):
        if self.images.ndim != 3:
            raise ShapeError(f"images must be (n, h, w), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ShapeError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.images.shape[1], self.images.shape[2]

    def flat(self) -> np.ndarray:
        return self.images.reshape(len(self.images), -1)


def _open(path: PathLike) -> IO[bytes]:
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _create(path: PathLike) -> IO[bytes]:
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "wb")
    return open(path, "wb")


def _read_exact(f: IO[bytes], n: int, path: PathLike, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise IdxFormatError(f"{path}: truncated {what}, wanted {n} bytes, got {len(data)}")
    return data


def _read_header(f: IO[bytes], path: PathLike, magic: int, ndims: int) -> Tuple[int, ...]:
    (found,) = struct.unpack(">I", _read_exact(f, 4, path, "magic number"))
    if found != magic:
        raise IdxFormatError(f"{path}: magic number {found:#010x}, expected {magic:#010x}")
    return struct.unpack(f">{ndims}I", _read_exact(f, 4 * ndims, path, "header"))


def load_idx(
    images_path: PathLike, labels_path: PathLike, limit: Optional[int] = None
) -> LabeledImages:
    """Read an IDX image/label pair. Pixels are scaled to [0, 1] by /255.

    Both headers are checked before any payload is read, so a count mismatch
    never yields a partial load.
    """
    with _open(images_path) as fi, _open(labels_path) as fl:
        count, rows, cols = _read_header(fi, images_path, IDX_IMAGES_MAGIC, 3)
        (n_labels,) = _read_header(fl, labels_path, IDX_LABELS_MAGIC, 1)
        if count != n_labels:
            raise IdxFormatError(
                f"{images_path} holds {count} images but {labels_path} holds {n_labels} labels"
            )
        n = count if limit is None else min(count, limit)
        pixels = _read_exact(fi, n * rows * cols, images_path, "pixel payload")
        labels = _read_exact(fl, n, labels_path, "label payload")
        if limit is None and (fi.read(1) or fl.read(1)):
            raise IdxFormatError(f"{images_path} / {labels_path}: trailing bytes after payload")

    images = np.frombuffer(pixels, dtype=np.uint8).reshape(n, rows, cols).astype(np.float64) / 255.0
    log.debug("loaded %d images of %dx%d from %s", n, rows, cols, images_path)
    return LabeledImages(images, np.frombuffer(labels, dtype=np.uint8).astype(np.int64))


def write_idx(images_path: PathLike, labels_path: PathLike, images: np.ndarray, labels: np.ndarray) -> None:
    """Write uint8 images (n, h, w) and labels (n,) in IDX format."""
    images = np.asarray(images)
    labels = np.asarray(labels)
    if images.dtype != np.uint8 or labels.dtype != np.uint8:
        raise ValueError("IDX payloads are unsigned bytes; convert with astype(np.uint8)")
    if images.ndim != 3 or labels.ndim != 1 or len(images) != len(labels):
        raise ShapeError(f"cannot write images {images.shape} with labels {labels.shape}")
    with _create(images_path) as f:
        f.write(struct.pack(">4I", IDX_IMAGES_MAGIC, *images.shape))
        f.write(np.ascontiguousarray(images).tobytes())
    with _create(labels_path) as f:
        f.write(struct.pack(">2I", IDX_LABELS_MAGIC, len(labels)))
        f.write(labels.tobytes())


def downscale(imgs: LabeledImages, factor: int = 2) -> LabeledImages:
    """Non-overlapping factor x factor average pooling."""
    n, h, w = imgs.images.shape
    if factor < 1 or h % factor or w % factor:
        raise ShapeError(f"{h}x{w} images are not divisible by factor {factor}")
    pooled = imgs.images.reshape(n, h // factor, factor, w // factor, factor).mean(axis=(2, 4))
    if n:
        pooled = np.clip(pooled, imgs.images.min(), imgs.images.max())
    return LabeledImages(pooled, imgs.labels)


@dataclass(frozen=True)
class RingSource:
    spec: RingSpec

    @property
    def data_dim(self) -> int:
        return 2

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return sample_ring(self.spec, n, rng)


@dataclass(frozen=True, eq=False)
class ImageSource:
    """Flattened images; minibatches are drawn uniformly with replacement."""

    images: np.ndarray  # (n, h*w)
    shape: Tuple[int, int]
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @classmethod
    def from_labeled(cls, imgs: LabeledImages) -> "ImageSource":
        return cls(imgs.flat(), imgs.shape, imgs.labels)

    @property
    def data_dim(self) -> int:
        return self.shape[0] * self.shape[1]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.images[rng.integers(0, len(self.images), size=n)]


def mnist_lite(images_path: PathLike, labels_path: PathLike, limit: int = 10_000, factor: int = 2) -> LabeledImages:
    imgs = downscale(load_idx(images_path, labels_path, limit=limit), factor)
    log.info("mnist-lite: %d images at %dx%d", len(imgs), *imgs.shape)
    return imgs
