"""Synthetic desk-scale benchmark: per-position Gaussian clusters with injected
out-of-distribution patch blocks."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class SyntheticBenchmark:
    """In-memory dataset: normal training grids, mixed test grids, pixel masks."""

    train: np.ndarray  # (n_train, grid, grid, dim) float32
    test: np.ndarray  # (n_test, grid, grid, dim) float32
    masks: np.ndarray  # (n_test, input_size, input_size) uint8
    labels: np.ndarray  # (n_test,) int, 1 = anomalous
    train_ids: list
    test_ids: list
    input_size: int


def make_benchmark(
    seed: int = 0,
    grid: int = 8,
    dim: int = 32,
    n_train: int = 300,
    n_test_normal: int = 20,
    n_test_anomalous: int = 20,
    block: int = 3,
    shift_sigmas: float = 6.0,
    cluster_std: float = 1.0,
    position_spread: float = 1.5,
    input_size: int = 224,
) -> SyntheticBenchmark:
    """Per-position Gaussian clusters as "normal" images; anomalies replace a
    contiguous block x block patch region with vectors whose mean is shifted by
    shift_sigmas cluster standard deviations along a random direction."""
    if input_size % grid != 0:
        raise DataError(f"input_size {input_size} not a multiple of grid {grid}")
    if not 1 <= block <= grid:
        raise DataError(f"block {block} out of range [1, {grid}]")
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, position_spread, size=(grid, grid, dim))

    def draw(n):
        return means + rng.normal(0.0, cluster_std, size=(n, grid, grid, dim))

    train = draw(n_train)
    normal = draw(n_test_normal)
    anomalous = draw(n_test_anomalous)
    px = input_size // grid
    masks = np.zeros((n_test_normal + n_test_anomalous, input_size, input_size), dtype=np.uint8)
    for i in range(n_test_anomalous):
        r0, c0 = rng.integers(0, grid - block + 1, size=2)
        direction = rng.normal(size=dim)
        direction /= np.linalg.norm(direction)
        shift = shift_sigmas * cluster_std * direction
        blob = rng.normal(0.0, cluster_std, size=(block, block, dim))
        anomalous[i, r0 : r0 + block, c0 : c0 + block] = (
            means[r0 : r0 + block, c0 : c0 + block] + shift + blob
        )
        masks[n_test_normal + i, r0 * px : (r0 + block) * px, c0 * px : (c0 + block) * px] = 1

    test = np.concatenate([normal, anomalous], axis=0)
    labels = np.concatenate(
        [np.zeros(n_test_normal, dtype=np.int64), np.ones(n_test_anomalous, dtype=np.int64)]
    )
    return SyntheticBenchmark(
        train=train.astype(np.float32),
        test=test.astype(np.float32),
        masks=masks,
        labels=labels,
        train_ids=[f"train_{i:03d}" for i in range(n_train)],
        test_ids=[f"test_{i:03d}" for i in range(n_test_normal + n_test_anomalous)],
        input_size=input_size,
    )


def write_dataset(bench: SyntheticBenchmark, root) -> Path:
    """Materialize the benchmark under the CLI directory contract.

    features/train/<id>_layer1.smdt and features/test/... hold one
    channels-first layer per image; gt/ holds per-image masks and labels.csv.
    """
    from .tensorio import TensorFile, write_tensor

    root = Path(root)
    train_dir = root / "features" / "train"
    test_dir = root / "features" / "test"
    gt_dir = root / "gt"
    for d in (train_dir, test_dir, gt_dir):
        d.mkdir(parents=True, exist_ok=True)
    for image_id, grid_values in zip(bench.train_ids, bench.train):
        layer = np.moveaxis(grid_values, -1, 0)  # (D, g, g)
        write_tensor(TensorFile(layer.shape, layer), train_dir / f"{image_id}_layer1.smdt")
    for i, (image_id, grid_values) in enumerate(zip(bench.test_ids, bench.test)):
        layer = np.moveaxis(grid_values, -1, 0)
        write_tensor(TensorFile(layer.shape, layer), test_dir / f"{image_id}_layer1.smdt")
        if bench.labels[i] == 1:
            mask = bench.masks[i].astype(np.float32)
            write_tensor(TensorFile(mask.shape, mask), gt_dir / f"{image_id}_mask.smdt")
    lines = ["image_id,label"]
    lines += [f"{iid},{label}" for iid, label in zip(bench.test_ids, bench.labels)]
    (gt_dir / "labels.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return root
