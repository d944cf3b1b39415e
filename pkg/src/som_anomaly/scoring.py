"""Per-node Gaussian statistics and Mahalanobis anomaly scoring.

Each lattice node keeps a regularized covariance over the normal patches
assigned to it. A test patch is scored by the minimum Mahalanobis distance to
its top-k nearest nodes; patch scores are upsampled to the input resolution,
Gaussian-smoothed, and reduced to an image-level score by the pixel maximum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .embedding import FeatureGallery, PatchGrid, upsample_bilinear
from .errors import DataError
from .som import SomGrid, bmu_batch, find_topk, topk_batch

__all__ = [
    "NodeStatistics",
    "AnomalyMap",
    "assign_gallery",
    "fit_node_statistics",
    "fit_all_statistics",
    "mahalanobis",
    "patch_score",
    "upsample_bilinear",
    "gaussian_smooth",
    "score_image",
]


@dataclass
class NodeStatistics:
    """Gaussian model of one node: centroid, member count, Cholesky of the covariance."""

    index: int
    centroid: np.ndarray  # (D,) float64
    count: int
    chol_lower: np.ndarray  # (D, D) float64, lower triangular
    eps: float

    def __post_init__(self):
        self.centroid = np.asarray(self.centroid, dtype=np.float64)
        self.chol_lower = np.asarray(self.chol_lower, dtype=np.float64)
        d = self.centroid.shape[0]
        if self.chol_lower.shape != (d, d):
            raise DataError(
                f"node {self.index}: factor shape {self.chol_lower.shape} != ({d}, {d})"
            )

    @property
    def dim(self) -> int:
        return self.centroid.shape[0]

    def packed_factor(self) -> np.ndarray:
        """Lower triangle of the Cholesky factor, row-major, length D*(D+1)/2."""
        return self.chol_lower[np.tril_indices(self.dim)]

    @classmethod
    def from_packed(cls, index, centroid, count, packed, eps) -> "NodeStatistics":
        d = np.asarray(centroid).shape[0]
        lower = np.zeros((d, d), dtype=np.float64)
        lower[np.tril_indices(d)] = packed
        return cls(index, centroid, count, lower, eps)


@dataclass(frozen=True)
class AnomalyMap:
    """Patch-level and pixel-level anomaly scores for one image."""

    patch_scores: np.ndarray  # (H, W)
    pixel_scores: np.ndarray  # (S, S)
    image_score: float


def assign_gallery(grid: SomGrid, gallery: FeatureGallery) -> list[np.ndarray]:
    """Partition gallery patches by BMU; element i holds flat-gallery indices for node i."""
    if gallery.dim != grid.dim:
        raise DataError(f"gallery dim {gallery.dim} != grid dim {grid.dim}")
    bmus = bmu_batch(grid, gallery.flat)
    order = np.argsort(bmus, kind="stable")
    boundaries = np.searchsorted(bmus[order], np.arange(grid.n_nodes + 1))
    return [order[boundaries[i] : boundaries[i + 1]] for i in range(grid.n_nodes)]


def fit_node_statistics(
    members: np.ndarray, centroid: np.ndarray, eps: float, index: int = 0, center: str = "centroid"
) -> NodeStatistics:
    """Regularized covariance of a node's members and its Cholesky factor.

    Deviations are taken from the node centroid by default (center="mean"
    switches to the empirical member mean). Fewer than two members yield the
    pure regularization covariance eps * I.
    """
    if eps <= 0.0:
        raise DataError(f"eps must be positive, got {eps}")
    if center not in ("centroid", "mean"):
        raise DataError(f"unknown covariance center {center!r}")
    centroid = np.asarray(centroid, dtype=np.float64)
    if not np.isfinite(centroid).all():
        raise DataError(f"node {index}: non-finite centroid")
    members = np.asarray(members, dtype=np.float64).reshape(-1, centroid.shape[0])
    if members.size and not np.isfinite(members).all():
        raise DataError(f"node {index}: non-finite members")
    n = members.shape[0]
    d = centroid.shape[0]
    if n < 2:
        lower = math.sqrt(eps) * np.eye(d)
        return NodeStatistics(index, centroid, n, lower, eps)
    ref = members.mean(axis=0) if center == "mean" else centroid
    dev = members - ref
    cov = dev.T @ dev / (n - 1) + eps * np.eye(d)
    return NodeStatistics(index, centroid, n, np.linalg.cholesky(cov), eps)


def fit_all_statistics(
    grid: SomGrid, gallery: FeatureGallery, eps: float, center: str = "centroid"
) -> list[NodeStatistics]:
    """assign_gallery + fit_node_statistics for every node, in node order."""
    flat = gallery.flat
    partition = assign_gallery(grid, gallery)
    return [
        fit_node_statistics(flat[idx], grid.weights[i], eps, index=i, center=center)
        for i, idx in enumerate(partition)
    ]


def mahalanobis(f: np.ndarray, stats: NodeStatistics) -> float:
    """sqrt((f-m)^T sigma^-1 (f-m)) via a triangular solve against the cached factor."""
    f = np.asarray(f, dtype=np.float64)
    if f.shape != stats.centroid.shape:
        raise DataError(f"embedding shape {f.shape} != centroid shape {stats.centroid.shape}")
    y = solve_triangular(stats.chol_lower, f - stats.centroid, lower=True)
    return float(np.linalg.norm(y))


def patch_score(f: np.ndarray, grid: SomGrid, all_stats: list[NodeStatistics], k: int) -> float:
    """Minimum Mahalanobis distance from f to its top-k nearest nodes."""
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    nodes = find_topk(grid, np.asarray(f, dtype=np.float64), k)
    return min(mahalanobis(f, all_stats[c]) for c in nodes)


def gaussian_smooth(pixels: np.ndarray, sigma: float = 4.0) -> np.ndarray:
    """Separable Gaussian blur, kernel truncated at radius ceil(4*sigma).

    The 1-d kernel is normalized to sum 1; borders reflect (half-sample
    symmetric), so constant maps pass through unchanged.
    """
    if sigma <= 0.0:
        raise DataError(f"sigma must be positive, got {sigma}")
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim != 2:
        raise DataError(f"expected a 2-d map, got shape {pixels.shape}")
    radius = math.ceil(4.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(x * x) / (2.0 * sigma * sigma))
    kernel /= kernel.sum()
    out = pixels
    for axis in (0, 1):
        out = _convolve_axis(out, kernel, axis)
    return out


def _convolve_axis(a: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = (kernel.shape[0] - 1) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (radius, radius)
    padded = np.pad(a, pad, mode="symmetric")
    windows = np.lib.stride_tricks.sliding_window_view(padded, kernel.shape[0], axis=axis)
    return windows @ kernel


def score_image(
    grid: SomGrid,
    all_stats: list[NodeStatistics],
    patch_grid: PatchGrid,
    k: int = 4,
    sigma: float = 4.0,
    out_size: int = 224,
) -> AnomalyMap:
    """Score every patch of one image and produce its smoothed anomaly map.

    patch scores -> corner-aligned bilinear upsample to out_size -> Gaussian
    smooth; the image score is the maximum smoothed pixel.
    """
    if patch_grid.dim != grid.dim:
        raise DataError(f"patch dim {patch_grid.dim} != grid dim {grid.dim}")
    if out_size < patch_grid.height:
        raise DataError(f"out_size {out_size} below patch grid extent {patch_grid.height}")
    flat = patch_grid.flat.astype(np.float64)
    n = flat.shape[0]
    candidates = topk_batch(grid, flat, k)  # (n, k)
    scores = np.empty((n, k), dtype=np.float64)
    for node in np.unique(candidates):
        rows, cols = np.nonzero(candidates == node)
        stats = all_stats[node]
        dev = flat[rows] - stats.centroid
        y = solve_triangular(stats.chol_lower, dev.T, lower=True)
        scores[rows, cols] = np.sqrt(np.einsum("ij,ij->j", y, y))
    patch_scores = scores.min(axis=1).reshape(patch_grid.height, patch_grid.width)
    pixel_scores = gaussian_smooth(upsample_bilinear(patch_scores, out_size, out_size), sigma)
    return AnomalyMap(patch_scores, pixel_scores, float(pixel_scores.max()))
