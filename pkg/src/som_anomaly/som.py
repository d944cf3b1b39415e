"""Self-organizing map over patch embeddings.

A K x K lattice of centroid vectors is trained by online competitive learning:
each sample pulls its best matching unit and, weighted by a Gaussian
neighborhood over lattice distance, the surrounding nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import FeatureGallery
from .errors import DataError

_BATCH_ROWS = 4096


@dataclass
class SomGrid:
    """K x K lattice of D-dim centroids; node k = u*K + v for lattice (u, v)."""

    K: int
    weights: np.ndarray  # (K*K, D) float64

    def __post_init__(self):
        w = np.ascontiguousarray(np.asarray(self.weights, dtype=np.float64))
        if w.ndim != 2 or w.shape[0] != self.K * self.K:
            raise DataError(f"expected ({self.K * self.K}, D) weights, got shape {w.shape}")
        if not np.isfinite(w).all():
            raise DataError("non-finite centroid entries")
        self.weights = w

    @property
    def n_nodes(self) -> int:
        return self.K * self.K

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def centroid(self, u: int, v: int) -> np.ndarray:
        return self.weights[u * self.K + v]

    def lattice_coords(self) -> np.ndarray:
        """(K*K, 2) array of (u, v) lattice coordinates in node-index order."""
        u, v = np.divmod(np.arange(self.n_nodes), self.K)
        return np.stack([u, v], axis=1).astype(np.float64)


@dataclass
class TrainSchedule:
    """Learning-rate / neighborhood-radius decay for online SOM training."""

    epochs: int = 10
    lr_start: float = 0.5
    lr_end: float = 0.01
    radius_start: float = 2.0
    radius_end: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise DataError(f"epochs must be >= 1, got {self.epochs}")
        if not (self.lr_start >= self.lr_end >= 0.0):
            raise DataError(f"need lr_start >= lr_end >= 0, got {self.lr_start}, {self.lr_end}")
        if self.lr_end == 0.0 and self.lr_start > 0.0:
            raise DataError("lr_end may be 0 only together with lr_start=0")
        if not (self.radius_start >= self.radius_end > 0.0):
            raise DataError(
                f"need radius_start >= radius_end > 0, got {self.radius_start}, {self.radius_end}"
            )


def _as_batch(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[None, :] if x.ndim == 1 else x


def squared_distances(weights: np.ndarray, batch: np.ndarray) -> np.ndarray:
    """(n, n_nodes) squared Euclidean distances from each row of batch to each node."""
    w_sq = np.einsum("ij,ij->i", weights, weights)
    b_sq = np.einsum("ij,ij->i", batch, batch)
    return b_sq[:, None] + w_sq[None, :] - 2.0 * (batch @ weights.T)


def _check_dim(grid: SomGrid, f: np.ndarray):
    if f.shape[-1] != grid.dim:
        raise DataError(f"embedding dim {f.shape[-1]} != grid dim {grid.dim}")


def init_positional(gallery: FeatureGallery, K: int, seed: int = 0) -> SomGrid:
    """Seed node (u, v) with the mean training embedding at grid position (u, v).

    Defined only when the gallery grid is K x K; otherwise falls back to
    sampling K*K gallery vectors (seeded).
    """
    if gallery.size == 0:
        raise DataError("empty gallery")
    if (gallery.height, gallery.width) != (K, K):
        return init_sample(gallery, K, seed)
    means = gallery.embeddings.astype(np.float64).mean(axis=0)  # (K, K, D)
    return SomGrid(K, means.reshape(K * K, -1))


def init_sample(gallery: FeatureGallery, K: int, seed: int = 0) -> SomGrid:
    """Seed the lattice with K*K gallery vectors drawn with a fixed seed."""
    if gallery.size == 0:
        raise DataError("empty gallery")
    rng = np.random.default_rng(seed)
    flat = gallery.flat
    idx = rng.choice(flat.shape[0], size=K * K, replace=flat.shape[0] < K * K)
    return SomGrid(K, flat[idx].astype(np.float64))


def find_bmu(grid: SomGrid, f: np.ndarray) -> int:
    """Index of the node with minimal squared distance to f; ties go to the lowest index."""
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 1:
        raise DataError(f"expected a single embedding vector, got shape {f.shape}")
    _check_dim(grid, f)
    diff = grid.weights - f
    return int(np.argmin(np.einsum("ij,ij->i", diff, diff)))


def find_topk(grid: SomGrid, f: np.ndarray, k: int) -> np.ndarray:
    """The k nearest nodes to f, ascending by squared distance, ties by node index."""
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 1:
        raise DataError(f"expected a single embedding vector, got shape {f.shape}")
    _check_dim(grid, f)
    if not 1 <= k <= grid.n_nodes:
        raise DataError(f"k={k} out of range [1, {grid.n_nodes}]")
    diff = grid.weights - f
    d = np.einsum("ij,ij->i", diff, diff)
    return np.argsort(d, kind="stable")[:k]


def bmu_batch(grid: SomGrid, batch: np.ndarray) -> np.ndarray:
    """Best matching unit per row of batch; argmin takes the lowest index on ties."""
    batch = _as_batch(batch)
    _check_dim(grid, batch)
    out = np.empty(batch.shape[0], dtype=np.intp)
    for start in range(0, batch.shape[0], _BATCH_ROWS):
        chunk = batch[start : start + _BATCH_ROWS]
        out[start : start + chunk.shape[0]] = np.argmin(
            squared_distances(grid.weights, chunk), axis=1
        )
    return out


def topk_batch(grid: SomGrid, batch: np.ndarray, k: int) -> np.ndarray:
    """(n, k) nearest node indices per row, ascending by distance, ties by index."""
    if not 1 <= k <= grid.n_nodes:
        raise DataError(f"k={k} out of range [1, {grid.n_nodes}]")
    batch = _as_batch(batch)
    _check_dim(grid, batch)
    out = np.empty((batch.shape[0], k), dtype=np.intp)
    for start in range(0, batch.shape[0], _BATCH_ROWS):
        chunk = batch[start : start + _BATCH_ROWS]
        d = squared_distances(grid.weights, chunk)
        out[start : start + chunk.shape[0]] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return out


def _lattice_sq_distances(K: int) -> np.ndarray:
    u, v = np.divmod(np.arange(K * K), K)
    coords = np.stack([u, v], axis=1).astype(np.float64)
    diff = coords[:, None, :] - coords[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _geometric(start: float, end: float, frac: float) -> float:
    if start == 0.0:
        return 0.0
    return start * (end / start) ** frac


def train(grid: SomGrid, gallery: FeatureGallery, sched: TrainSchedule) -> SomGrid:
    """Online SOM pass over the gallery; returns a new grid, input untouched.

    Per sample f at global step t: with c the BMU of f, every node k moves by
    alpha(t) * exp(-delta(k, c)^2 / (2 r(t)^2)) * (f - m_k), where delta is the
    Euclidean lattice distance and alpha, r decay geometrically from their
    start to end values over all epochs * n_samples steps. Deterministic for a
    fixed schedule seed.
    """
    if gallery.size == 0:
        raise DataError("empty gallery")
    if gallery.dim != grid.dim:
        raise DataError(f"gallery dim {gallery.dim} != grid dim {grid.dim}")
    weights = grid.weights.copy()
    flat = gallery.flat
    n = flat.shape[0]
    total = sched.epochs * n
    lat_sq = _lattice_sq_distances(grid.K)
    rng = np.random.default_rng(sched.seed)
    t = 0
    for _ in range(sched.epochs):
        order = rng.permutation(n)
        for i in order:
            frac = t / (total - 1) if total > 1 else 0.0
            alpha = _geometric(sched.lr_start, sched.lr_end, frac)
            radius = _geometric(sched.radius_start, sched.radius_end, frac)
            f = flat[i].astype(np.float64)
            diff = f - weights
            c = int(np.argmin(np.einsum("ij,ij->i", diff, diff)))
            h = np.exp(lat_sq[c] / (-2.0 * radius * radius))
            weights += (alpha * h)[:, None] * diff
            t += 1
    return SomGrid(grid.K, weights)


def quantization_error(grid: SomGrid, gallery: FeatureGallery) -> float:
    """Mean squared distance from each gallery patch to its BMU centroid."""
    if gallery.size == 0:
        raise DataError("empty gallery")
    if gallery.dim != grid.dim:
        raise DataError(f"gallery dim {gallery.dim} != grid dim {grid.dim}")
    flat = _as_batch(gallery.flat)
    total = 0.0
    for start in range(0, flat.shape[0], _BATCH_ROWS):
        chunk = flat[start : start + _BATCH_ROWS]
        bmus = np.argmin(squared_distances(grid.weights, chunk), axis=1)
        diff = chunk - grid.weights[bmus]
        total += np.einsum("ij,ij->i", diff, diff).sum()
    return float(total / flat.shape[0])
