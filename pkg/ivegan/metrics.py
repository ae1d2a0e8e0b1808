"""Numbers behind the pictures: mode coverage and histogram divergence for
the ring task, reconstruction fidelity and latent clustering for images."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import entropy

from .data import RingSpec, ring_means, sample_ring
from .errors import ShapeError
from .model import IveGanModel, encode

GRID_BINS = 64
GRID_EXTENT = (-1.2, 1.2)
MIN_COVERAGE_SAMPLES = 1000


def assign_modes(points: np.ndarray, means: np.ndarray, sigma: float, k: float = 3.0) -> np.ndarray:
    """Nearest mean per point, or -1 when that mean is farther than k * sigma.

    Ties go to the lowest mode index.
    """
    if not k > 0:
        raise ValueError(f"threshold multiplier k must be > 0, got {k}")
    means = np.asarray(means, dtype=np.float64)
    if len(means) == 0:
        raise ValueError("no mode means given")
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if means.ndim != 2 or points.ndim != 2 or points.shape[1] != means.shape[1]:
        raise ShapeError(f"assign_modes: points {points.shape} do not match means {means.shape}")
    dist = np.linalg.norm(points[:, None, :] - means[None, :, :], axis=2)
    nearest = np.argmin(dist, axis=1)
    within = dist[np.arange(len(points)), nearest] <= k * sigma
    return np.where(within, nearest, -1)


def assign_mode(p: np.ndarray, means: np.ndarray, sigma: float, k: float = 3.0) -> Optional[int]:
    mode = int(assign_modes(np.asarray(p).reshape(1, -1), means, sigma, k)[0])
    return None if mode < 0 else mode


@dataclass(frozen=True, eq=False)
class DensityGrid:
    counts: np.ndarray  # (bins, bins); row 0 is the top (largest y)
    dropped: int
    extent: Tuple[float, float]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def density_grid(samples: np.ndarray, bins: int = GRID_BINS, extent: Tuple[float, float] = GRID_EXTENT) -> DensityGrid:
    """2-D histogram over extent x extent, laid out as an image (x right, y up)."""
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    lo, hi = extent
    counts, _, _ = np.histogram2d(samples[:, 1], samples[:, 0], bins=bins, range=[[lo, hi], [lo, hi]])
    counts = np.flipud(counts).astype(np.int64)
    return DensityGrid(counts, len(samples) - int(counts.sum()), (lo, hi))


def _cells(samples: np.ndarray, bins: int, extent: Tuple[float, float]) -> np.ndarray:
    grid = density_grid(samples, bins, extent)
    return np.append(grid.counts.ravel(), grid.dropped).astype(np.float64)


def jsd_histogram(
    a: np.ndarray, b: np.ndarray, bins: int = GRID_BINS, extent: Tuple[float, float] = GRID_EXTENT
) -> float:
    """Jensen-Shannon divergence (nats) between the normalised 2-D histograms.

    Samples outside the grid share one extra cell.
    """
    p = _cells(a, bins, extent)
    q = _cells(b, bins, extent)
    if p.sum() == 0 or q.sum() == 0:
        raise ValueError("jsd_histogram needs two non-empty sample sets")
    p /= p.sum()
    q /= q.sum()
    m = 0.5 * (p + q)
    jsd = 0.5 * entropy(p, m) + 0.5 * entropy(q, m)
    return float(min(max(jsd, 0.0), math.log(2.0)))


@dataclass(frozen=True)
class CoverageReport:
    per_mode_counts: List[int]
    assigned_fraction: float
    covered_modes: int
    jsd: float
    n_samples: int
    n_modes: int
    k: float
    min_share: float

    def shares(self) -> List[float]:
        return [c / self.n_samples for c in self.per_mode_counts]

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    def summary(self) -> str:
        shares = " ".join(f"{s:.3f}" for s in self.shares())
        return (
            f"covered modes:     {self.covered_modes} / {self.n_modes}\n"
            f"assigned fraction: {self.assigned_fraction:.4f} (within {self.k:g} sigma)\n"
            f"JSD (64x64 grid):  {self.jsd:.4f}\n"
            f"per-mode shares:   {shares}\n"
            f"samples:           {self.n_samples}"
        )


def coverage(
    samples: np.ndarray,
    spec: RingSpec,
    k: float = 3.0,
    min_share: float = 0.02,
    rng: Optional[np.random.Generator] = None,
    bins: int = GRID_BINS,
) -> CoverageReport:
    """How many ring modes the samples reach, and how far their density is
    from a fresh true sample of the same size."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[1] != 2:
        raise ShapeError(f"coverage expects (n, 2) samples, got {samples.shape}")
    n = len(samples)
    if n < MIN_COVERAGE_SAMPLES:
        raise ValueError(f"coverage needs at least {MIN_COVERAGE_SAMPLES} samples, got {n}")
    if rng is None:
        rng = spec.rng()

    modes = assign_modes(samples, ring_means(spec), spec.sigma, k)
    counts = np.bincount(modes[modes >= 0], minlength=spec.n_modes)
    covered = int(np.count_nonzero(counts / n >= min_share))
    reference = sample_ring(spec, n, rng)
    jsd = jsd_histogram(samples, reference, bins)
    return CoverageReport(
        per_mode_counts=[int(c) for c in counts],
        assigned_fraction=float(counts.sum() / n),
        covered_modes=covered,
        jsd=jsd,
        n_samples=n,
        n_modes=spec.n_modes,
        k=float(k),
        min_share=float(min_share),
    )


class Reconstructor(Protocol):
    def reconstruct(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class ReconstructionError:
    per_sample: np.ndarray
    mismatched_per_sample: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.per_sample.mean())

    @property
    def mismatched_mean(self) -> float:
        return float(self.mismatched_per_sample.mean())


def reconstruction_error(model: Reconstructor, xs: np.ndarray, rng: np.random.Generator) -> ReconstructionError:
    """L2 distance of each x to its reconstruction, and to the reconstruction
    of a randomly permuted partner (the chance baseline)."""
    xs = np.asarray(xs, dtype=np.float64)
    if len(xs) == 0:
        raise ValueError("reconstruction_error: empty batch")
    rec = model.reconstruct(xs, rng)
    matched = np.linalg.norm(xs - rec, axis=1)
    partner = rng.permutation(len(xs))
    mismatched = np.linalg.norm(xs - rec[partner], axis=1)
    return ReconstructionError(matched, mismatched)


def latent_knn_agreement(latents: np.ndarray, labels: Sequence[int], k: int = 5) -> float:
    """Fraction of points whose k nearest neighbours (self excluded) vote for
    their own label. Ties go to the smallest label."""
    latents = np.asarray(latents, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = len(latents)
    if len(labels) != n:
        raise ShapeError(f"{n} latents but {len(labels)} labels")
    if k < 1 or k >= n:
        raise ValueError(f"k must lie in [1, n), got k={k} with n={n}")
    _, idx = cKDTree(latents).query(latents, k=k + 1)
    idx = np.asarray(idx).reshape(n, k + 1)
    hits = 0
    for i in range(n):
        row = idx[i]
        neigh = row[row != i][:k]
        if len(neigh) < k:
            neigh = row[:k]
        votes = np.bincount(labels[neigh])
        hits += int(np.argmax(votes) == labels[i])
    return hits / n


@dataclass(frozen=True)
class RepresentationReport:
    knn_agreement: float
    chance_agreement: float
    k: int
    reconstruction_l2: float
    mismatched_l2: float
    n_samples: int

    @property
    def reconstruction_gap(self) -> float:
        """Relative reduction of matched vs shuffled-pair reconstruction error."""
        if self.mismatched_l2 == 0:
            return 0.0
        return 1.0 - self.reconstruction_l2 / self.mismatched_l2

    def to_dict(self) -> Dict[str, object]:
        d = asdict(self)
        d["reconstruction_gap"] = self.reconstruction_gap
        return d

    def summary(self) -> str:
        return (
            f"{self.k}-NN label agreement: {self.knn_agreement:.4f} (shuffled labels: {self.chance_agreement:.4f})\n"
            f"reconstruction L2:      {self.reconstruction_l2:.4f}\n"
            f"shuffled-pair L2:       {self.mismatched_l2:.4f} (gap {self.reconstruction_gap:.1%})\n"
            f"samples:                {self.n_samples}"
        )


def representation_report(
    model: IveGanModel, images: np.ndarray, labels: np.ndarray, rng: np.random.Generator, k: int = 5
) -> RepresentationReport:
    latents = encode(model, images)
    rec = reconstruction_error(model, images, rng)
    return RepresentationReport(
        knn_agreement=latent_knn_agreement(latents, labels, k),
        chance_agreement=latent_knn_agreement(latents, rng.permutation(labels), k),
        k=k,
        reconstruction_l2=rec.mean,
        mismatched_l2=rec.mismatched_mean,
        n_samples=len(images),
    )
