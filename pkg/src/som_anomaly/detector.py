"""Scikit-learn style estimator wrapping the full train/score pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .scoring import AnomalyMap, fit_all_statistics, score_image
from .som import TrainSchedule, init_positional, quantization_error, train
from .validation import as_gallery, as_patch_grids


class SomAnomalyDetector(BaseEstimator):
    """Anomaly localization by SOM memory plus per-node Mahalanobis scoring.

    Fits a map_size x map_size lattice of centroids on defect-free patch
    embeddings (positional initialization when the patch grid matches the
    lattice, seeded sampling otherwise), then models each node's members with
    a regularized Gaussian. Test patches are scored by the minimum Mahalanobis
    distance over their top_k nearest nodes; maps are upsampled to output_size
    and Gaussian-smoothed.

    Attributes set by fit:
        grid_: trained SomGrid.
        stats_: list of per-node NodeStatistics.
        quantization_error_before_, quantization_error_after_: fit diagnostics.
        n_features_in_: embedding dimension D.
    """

    def __init__(
        self,
        map_size=56,
        top_k=4,
        epsilon=0.01,
        sigma=4.0,
        output_size=224,
        epochs=10,
        lr_start=0.5,
        lr_end=0.01,
        radius_start=2.0,
        radius_end=0.5,
        seed=0,
        covariance_center="centroid",
    ):
        self.map_size = map_size
        self.top_k = top_k
        self.epsilon = epsilon
        self.sigma = sigma
        self.output_size = output_size
        self.epochs = epochs
        self.lr_start = lr_start
        self.lr_end = lr_end
        self.radius_start = radius_start
        self.radius_end = radius_end
        self.seed = seed
        self.covariance_center = covariance_center

    def _schedule(self) -> TrainSchedule:
        return TrainSchedule(
            epochs=self.epochs,
            lr_start=self.lr_start,
            lr_end=self.lr_end,
            radius_start=self.radius_start,
            radius_end=self.radius_end,
            seed=self.seed,
        )

    def fit(self, X, y=None):
        """Train the map and node statistics on normal patch embeddings.

        X is a FeatureGallery, an (n_images, H, W, D) array, or a list of
        PatchGrid. Returns self.
        """
        gallery = as_gallery(X)
        initial = init_positional(gallery, self.map_size, seed=self.seed)
        self.quantization_error_before_ = quantization_error(initial, gallery)
        self.grid_ = train(initial, gallery, self._schedule())
        self.quantization_error_after_ = quantization_error(self.grid_, gallery)
        self.stats_ = fit_all_statistics(
            self.grid_, gallery, self.epsilon, center=self.covariance_center
        )
        self.n_features_in_ = gallery.dim
        return self

    def score_map(self, patch_grid) -> AnomalyMap:
        """Full AnomalyMap (patch scores, smoothed pixel scores, image score) for one image."""
        check_is_fitted(self, "grid_")
        (grid,) = as_patch_grids(patch_grid)
        return score_image(
            self.grid_,
            self.stats_,
            grid,
            k=self.top_k,
            sigma=self.sigma,
            out_size=self.output_size,
        )

    def transform(self, X) -> np.ndarray:
        """Smoothed pixel-level anomaly maps, shaped (n, output_size, output_size)."""
        check_is_fitted(self, "grid_")
        return np.stack([self.score_map(g).pixel_scores for g in as_patch_grids(X)])

    def image_scores(self, X) -> np.ndarray:
        """Image-level anomaly scores (max smoothed pixel); higher means more anomalous."""
        check_is_fitted(self, "grid_")
        return np.array([self.score_map(g).image_score for g in as_patch_grids(X)])

    def score_samples(self, X) -> np.ndarray:
        """Negated image scores, following the outlier-estimator convention
        that larger values mean more normal."""
        return -self.image_scores(X)
