"""Input coercion and validation helpers for the estimator API."""

from __future__ import annotations

import numpy as np

from .embedding import FeatureGallery, PatchGrid
from .errors import DataError


def as_gallery(X) -> FeatureGallery:
    """Coerce a gallery argument: FeatureGallery, (n, H, W, D) array, or list of PatchGrid."""
    if isinstance(X, FeatureGallery):
        gallery = X
    elif isinstance(X, (list, tuple)) and X and isinstance(X[0], PatchGrid):
        from .embedding import build_gallery

        gallery = build_gallery(list(X))
    else:
        arr = np.asarray(X)
        if arr.ndim != 4:
            raise DataError(f"expected (n_images, H, W, D) data, got shape {arr.shape}")
        gallery = FeatureGallery(arr)
    if gallery.size == 0:
        raise DataError("empty gallery")
    if not np.isfinite(gallery.embeddings).all():
        raise DataError("gallery contains non-finite values")
    return gallery


def as_patch_grids(X) -> list[PatchGrid]:
    """Coerce a scoring argument to a list of PatchGrid (accepts one grid or a batch)."""
    if isinstance(X, PatchGrid):
        return [X]
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], PatchGrid):
        return list(X)
    arr = np.asarray(X)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4:
        raise DataError(f"expected (n, H, W, D) or (H, W, D) data, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise DataError("input contains non-finite values")
    return [PatchGrid(arr[i]) for i in range(arr.shape[0])]
