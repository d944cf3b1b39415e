"""Multi-scale patch embeddings.

Per-layer CNN feature maps are brought to a common spatial grid (the largest
map's extents), concatenated along channels, and stacked into a gallery of
per-position embedding vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class LayerFeatureMap:
    """One backbone layer's activation block, shaped (channels, height, width)."""

    layer_id: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 3:
            raise DataError(f"layer {self.layer_id}: expected 3-d values, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise DataError(f"layer {self.layer_id}: non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class PatchGrid:
    """H x W grid of D-dimensional patch embeddings for one image."""

    embeddings: np.ndarray  # (H, W, D)

    def __post_init__(self):
        e = np.asarray(self.embeddings)
        if e.ndim != 3:
            raise DataError(f"expected (H, W, D) embeddings, got shape {e.shape}")
        object.__setattr__(self, "embeddings", e)

    @property
    def height(self) -> int:
        return self.embeddings.shape[0]

    @property
    def width(self) -> int:
        return self.embeddings.shape[1]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[2]

    @property
    def flat(self) -> np.ndarray:
        """Row-major (H*W, D) view; position index i = r*W + c."""
        return self.embeddings.reshape(-1, self.embeddings.shape[2])


@dataclass(frozen=True)
class FeatureGallery:
    """All patch embeddings of a training set, indexed by (image, row, col)."""

    embeddings: np.ndarray  # (n_images, H, W, D)

    def __post_init__(self):
        e = np.asarray(self.embeddings)
        if e.ndim != 4:
            raise DataError(f"expected (n, H, W, D) gallery, got shape {e.shape}")
        object.__setattr__(self, "embeddings", e)

    @property
    def n_images(self) -> int:
        return self.embeddings.shape[0]

    @property
    def height(self) -> int:
        return self.embeddings.shape[1]

    @property
    def width(self) -> int:
        return self.embeddings.shape[2]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[3]

    @property
    def size(self) -> int:
        """Total number of patches held."""
        return self.n_images * self.height * self.width

    @property
    def flat(self) -> np.ndarray:
        """(n*H*W, D) view, images then rows then cols."""
        return self.embeddings.reshape(-1, self.embeddings.shape[3])

    def at(self, image: int, row: int, col: int) -> np.ndarray:
        return self.embeddings[image, row, col]


def upsample_nearest(layer: LayerFeatureMap, target_h: int, target_w: int) -> LayerFeatureMap:
    """Nearest-neighbor upsampling to (target_h, target_w).

    Targets must be integer multiples of the source extents; output value at
    (r, c) equals the source value at (floor(r*h/target_h), floor(c*w/target_w)).
    """
    h, w = layer.height, layer.width
    if target_h % h != 0 or target_w % w != 0:
        raise DataError(
            f"target extents {target_h}x{target_w} are not multiples of source {h}x{w}"
        )
    out = np.repeat(np.repeat(layer.values, target_h // h, axis=1), target_w // w, axis=2)
    return LayerFeatureMap(layer.layer_id, out)


def upsample_bilinear(values: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear interpolation over the last two axes.

    Constant inputs map to constant outputs; a 1x1 input broadcasts its value.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim < 2:
        raise DataError(f"expected at least 2-d input, got shape {values.shape}")
    if out_h < 1 or out_w < 1:
        raise DataError(f"degenerate output size {out_h}x{out_w}")
    h, w = values.shape[-2:]

    def _axis_weights(n_src, n_out):
        if n_out == 1 or n_src == 1:
            src = np.zeros(n_out)
        else:
            src = np.arange(n_out) * (n_src - 1) / (n_out - 1)
        lo = np.minimum(np.floor(src).astype(np.intp), n_src - 1)
        hi = np.minimum(lo + 1, n_src - 1)
        frac = src - lo
        return lo, hi, frac

    r0, r1, fr = _axis_weights(h, out_h)
    c0, c1, fc = _axis_weights(w, out_w)

    rows = values[..., r0, :] * (1.0 - fr)[:, None] + values[..., r1, :] * fr[:, None]
    out = rows[..., :, c0] * (1.0 - fc) + rows[..., :, c1] * fc
    return out


def assemble_embeddings(layers: list[LayerFeatureMap], interpolation: str = "nearest") -> PatchGrid:
    """Concatenate per-layer features channel-wise on the largest layer's grid.

    Layers beyond the first are upsampled to the first layer's extents; the
    embedding at (r, c) is layer1 || layer2^ || ... at that position.
    """
    if not layers:
        raise DataError("no layers given")
    if interpolation not in ("nearest", "bilinear"):
        raise DataError(f"unknown interpolation {interpolation!r}")
    target_h, target_w = layers[0].height, layers[0].width
    planes = []
    for layer in layers:
        if (layer.height, layer.width) == (target_h, target_w):
            planes.append(layer.values)
        elif interpolation == "nearest":
            planes.append(upsample_nearest(layer, target_h, target_w).values)
        else:
            planes.append(
                upsample_bilinear(layer.values, target_h, target_w).astype(layer.values.dtype)
            )
    for layer, plane in zip(layers, planes):
        if plane.shape[1:] != (target_h, target_w):
            raise DataError(
                f"layer {layer.layer_id}: extent {plane.shape[1:]} != target "
                f"{(target_h, target_w)} after upsampling"
            )
    stacked = np.concatenate(planes, axis=0)  # (sum C, H, W)
    return PatchGrid(np.moveaxis(stacked, 0, -1))


def build_gallery(grids: list[PatchGrid]) -> FeatureGallery:
    """Stack per-image patch grids into one (n, H, W, D) gallery."""
    if not grids:
        raise DataError("empty grid list")
    shape = grids[0].embeddings.shape
    for i, g in enumerate(grids):
        if g.embeddings.shape != shape:
            raise DataError(
                f"grid {i} has shape {g.embeddings.shape}, expected {shape}: "
                "gallery requires homogeneous grids"
            )
    return FeatureGallery(np.stack([g.embeddings for g in grids], axis=0))
