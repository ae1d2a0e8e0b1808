"""Invariant transformations T(x) applied to real samples before D sees them.

Two families: additive Gaussian shifts for point data and small random
shift + rotation warps for raster images.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import ndimage

from .errors import ShapeError

MAX_ROTATION_DEG = 45.0


@dataclass(frozen=True, eq=False)
class GaussianShift:
    """T(x) = x + t with t ~ N(0, sigma / 2)."""

    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.array(self.sigma, dtype=np.float64)
        check_psd(sigma)
        sigma.flags.writeable = False
        object.__setattr__(self, "sigma", sigma)

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]


@dataclass(frozen=True)
class ImageAffine:
    """Random integer shift in [-max_shift_px, max_shift_px] per axis and a
    rotation drawn uniformly from [-max_rot_deg, max_rot_deg]."""

    max_shift_px: int
    max_rot_deg: float
    height: int
    width: int

    def __post_init__(self):
        if self.max_shift_px < 0 or self.max_rot_deg < 0:
            raise ValueError(
                f"shift/rotation bounds must be >= 0, got {self.max_shift_px} px / {self.max_rot_deg} deg"
            )
        if self.max_rot_deg > MAX_ROTATION_DEG:
            raise ValueError(f"max_rot_deg {self.max_rot_deg} exceeds {MAX_ROTATION_DEG}")
        if self.height < 1 or self.width < 1:
            raise ShapeError(f"image size must be positive, got {self.height}x{self.width}")
        if self.max_shift_px >= min(self.height, self.width):
            raise ValueError(
                f"max_shift_px {self.max_shift_px} must be below the image size {self.height}x{self.width}"
            )


TransformSpec = Union[GaussianShift, ImageAffine]


def check_psd(sigma: np.ndarray, tol: float = 1e-12) -> None:
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ShapeError(f"covariance must be square, got shape {sigma.shape}")
    if not np.isfinite(sigma).all():
        raise ValueError("covariance has non-finite entries")
    scale = max(1.0, float(np.abs(sigma).max(initial=0.0)))
    if not np.allclose(sigma, sigma.T, rtol=0.0, atol=tol * scale):
        raise ValueError("covariance is not symmetric")
    if np.linalg.eigvalsh(sigma).min() < -tol * scale:
        raise ValueError("covariance is not positive semidefinite")


def _factor(cov: np.ndarray) -> np.ndarray:
    # L with L @ L.T == cov; falls back to an eigen factor for singular cov
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        return v * np.sqrt(np.clip(w, 0.0, None))


def gaussian_shift(x: np.ndarray, sigma: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=np.float64)
    check_psd(sigma)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != sigma.shape[0]:
        raise ShapeError(f"gaussian_shift: batch {x.shape} does not match covariance {sigma.shape}")
    t = rng.standard_normal(x.shape) @ _factor(sigma / 2.0).T
    return x + t


def image_affine(img: np.ndarray, dx: float, dy: float, theta: float) -> np.ndarray:
    """Rotate by ``theta`` degrees about the image centre, then translate by
    (dx, dy) pixels. Bilinear sampling, zero outside the source image."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ShapeError(f"image_affine expects a 2-D image, got shape {img.shape}")
    h, w = img.shape
    if abs(theta) > MAX_ROTATION_DEG:
        raise ValueError(f"rotation {theta} deg outside +-{MAX_ROTATION_DEG}")
    if abs(dx) >= min(h, w) or abs(dy) >= min(h, w):
        raise ValueError(f"shift ({dx}, {dy}) too large for a {h}x{w} image")
    if dx == 0 and dy == 0 and theta == 0:
        return img.copy()

    a = math.radians(theta)
    cos, sin = math.cos(a), math.sin(a)
    # (row, col) coordinates; ndimage maps output coords to input coords
    inv = np.array([[cos, sin], [-sin, cos]])
    centre = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    shift = np.array([dy, dx], dtype=np.float64)
    offset = centre - inv @ (centre + shift)
    out = ndimage.affine_transform(
        img, inv, offset=offset, order=1, mode="constant", cval=0.0, prefilter=False
    )
    lo = min(float(img.min()), 0.0)
    hi = max(float(img.max()), 0.0)
    return np.clip(out, lo, hi)


def sample_transform(spec: TransformSpec, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Apply freshly drawn transform parameters to every element of a batch.

    Image batches may be (batch, h, w) or flattened row-major to (batch, h*w);
    the output has the input's shape.
    """
    x = np.asarray(x, dtype=np.float64)
    if isinstance(spec, GaussianShift):
        return gaussian_shift(x, spec.sigma, rng)
    if isinstance(spec, ImageAffine):
        h, w = spec.height, spec.width
        if x.ndim == 2 and x.shape[1] == h * w:
            images = x.reshape(-1, h, w)
        elif x.ndim == 3 and x.shape[1:] == (h, w):
            images = x
        else:
            raise ShapeError(f"image transform for {h}x{w} images got a batch of shape {x.shape}")
        out = np.empty_like(images)
        for i, img in enumerate(images):
            dx, dy = rng.integers(-spec.max_shift_px, spec.max_shift_px, size=2, endpoint=True)
            theta = rng.uniform(-spec.max_rot_deg, spec.max_rot_deg)
            out[i] = image_affine(img, int(dx), int(dy), float(theta))
        return out.reshape(x.shape)
    raise TypeError(f"unknown transform spec {spec!r}")
