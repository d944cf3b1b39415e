"""Threshold-independent evaluation: AUROC, connected components, PRO score."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DataError

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)
MAX_THRESHOLDS = 10000


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the group average."""
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    starts = ends - counts + 1
    return ((starts + ends) / 2.0)[inverse]


def auroc(scores, labels) -> float:
    """Area under the ROC curve as the Mann-Whitney statistic.

    Equals P(score_pos > score_neg) + 0.5 * P(score_pos == score_neg),
    computed exactly from average ranks.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise DataError(f"{scores.shape[0]} scores vs {labels.shape[0]} labels")
    if not np.isin(labels, (0, 1)).all():
        raise DataError("labels must be binary 0/1")
    n_pos = int(labels.sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUROC needs at least one positive and one negative label")
    ranks = _average_ranks(scores)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def connected_components(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """8-connectivity labeling; returns (labels, count) with background 0."""
    mask = np.asarray(mask)
    if not np.isin(mask, (0, 1)).all():
        raise DataError("mask must be binary 0/1")
    labels, count = ndimage.label(mask, structure=EIGHT_CONNECTED)
    return labels, int(count)


def _select_thresholds(pooled: np.ndarray) -> np.ndarray:
    """Distinct pooled scores when few, else equally-spaced quantiles; descending."""
    distinct = np.unique(pooled)
    if distinct.shape[0] > MAX_THRESHOLDS:
        distinct = np.unique(np.quantile(pooled, np.linspace(0.0, 1.0, MAX_THRESHOLDS)))
    return distinct[::-1]


def _integrate_to_limit(xs: np.ndarray, ys: np.ndarray, limit: float) -> float:
    """Trapezoid over the polyline for x in [0, limit], interpolating the endpoint."""
    area = 0.0
    for i in range(1, xs.shape[0]):
        x0, x1, y0, y1 = xs[i - 1], xs[i], ys[i - 1], ys[i]
        if x1 <= limit:
            area += (x1 - x0) * (y0 + y1) / 2.0
            continue
        if x0 >= limit:
            break
        y_lim = y0 + (limit - x0) / (x1 - x0) * (y1 - y0)
        area += (limit - x0) * (y0 + y_lim) / 2.0
        break
    return area


def pro_score(score_maps, masks, fpr_limit: float = 0.3) -> float:
    """Per-region-overlap score, integrated over FPR in [0, fpr_limit] and normalized.

    At each threshold the mean fraction of every ground-truth region's pixels
    above threshold is plotted against the global false positive rate over all
    negative pixels; the curve is trapezoid-integrated up to fpr_limit and
    divided by fpr_limit.
    """
    if not 0.0 < fpr_limit <= 1.0:
        raise DataError(f"fpr_limit must be in (0, 1], got {fpr_limit}")
    score_maps = np.asarray(score_maps, dtype=np.float64)
    masks = np.asarray(masks)
    if score_maps.shape != masks.shape:
        raise DataError(f"score maps shape {score_maps.shape} != masks shape {masks.shape}")
    if score_maps.ndim == 2:
        score_maps = score_maps[None]
        masks = masks[None]

    region_scores = []
    for img_scores, mask in zip(score_maps, masks):
        labels, count = connected_components(mask)
        for region in range(1, count + 1):
            region_scores.append(np.sort(img_scores[labels == region]))
    if not region_scores:
        raise DataError("no anomalous regions in ground truth")
    negatives = np.sort(score_maps[masks == 0])
    if negatives.size == 0:
        raise DataError("no negative pixels in ground truth")

    thresholds = _select_thresholds(score_maps.ravel())
    fp = negatives.shape[0] - np.searchsorted(negatives, thresholds, side="left")
    fprs = fp / negatives.shape[0]
    overlaps = np.zeros(thresholds.shape[0], dtype=np.float64)
    for scores in region_scores:
        hit = scores.shape[0] - np.searchsorted(scores, thresholds, side="left")
        overlaps += hit / scores.shape[0]
    overlaps /= len(region_scores)

    xs = np.concatenate(([0.0], fprs))
    ys = np.concatenate(([0.0], overlaps))
    return float(_integrate_to_limit(xs, ys, fpr_limit) / fpr_limit)


@dataclass(frozen=True)
class GroundTruth:
    """Per-image binary pixel masks and image labels for one test split."""

    pixel_masks: dict  # image id -> (S, S) binary array
    image_labels: dict  # image id -> 0/1

    def __post_init__(self):
        if set(self.pixel_masks) != set(self.image_labels):
            raise DataError("mask ids and label ids differ")
        shape = None
        for image_id, mask in self.pixel_masks.items():
            mask = np.asarray(mask)
            if not np.isin(mask, (0, 1)).all():
                raise DataError(f"{image_id}: mask must be binary 0/1")
            if shape is None:
                shape = mask.shape
            elif mask.shape != shape:
                raise DataError(f"{image_id}: mask shape {mask.shape} != {shape}")
            positives = int(mask.sum())
            label = self.image_labels[image_id]
            if label not in (0, 1):
                raise DataError(f"{image_id}: label must be 0/1, got {label}")
            if label == 1 and positives == 0:
                raise DataError(f"{image_id}: defective image with empty mask")
            if label == 0 and positives > 0:
                raise DataError(f"{image_id}: good image with non-empty mask")

    @property
    def image_ids(self) -> list:
        return sorted(self.pixel_masks)


@dataclass(frozen=True)
class CategoryResult:
    pixel_auroc: float
    image_auroc: float
    pro_score: float

    def __post_init__(self):
        for name in ("pixel_auroc", "image_auroc", "pro_score"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DataError(f"{name}={v} outside [0, 1]")

    def as_dict(self) -> dict:
        return {
            "pixel_auroc": self.pixel_auroc,
            "image_auroc": self.image_auroc,
            "pro_score": self.pro_score,
        }


def evaluate(pixel_score_maps: dict, image_scores: dict, gt: GroundTruth,
             fpr_limit: float = 0.3) -> CategoryResult:
    """Pixel AUROC pooled over all test pixels, image AUROC, and PRO for one split."""
    ids = gt.image_ids
    missing = [i for i in ids if i not in pixel_score_maps or i not in image_scores]
    if missing:
        raise DataError(f"missing score outputs for: {', '.join(map(str, missing))}")
    maps = np.stack([np.asarray(pixel_score_maps[i], dtype=np.float64) for i in ids])
    masks = np.stack([np.asarray(gt.pixel_masks[i]) for i in ids])
    if maps.shape != masks.shape:
        raise DataError(f"score maps shape {maps.shape} != masks shape {masks.shape}")
    pixel = auroc(maps.ravel(), masks.ravel())
    image = auroc(
        np.array([image_scores[i] for i in ids], dtype=np.float64),
        np.array([gt.image_labels[i] for i in ids]),
    )
    pro = pro_score(maps, masks, fpr_limit=fpr_limit)
    return CategoryResult(pixel_auroc=pixel, image_auroc=image, pro_score=pro)


@dataclass(frozen=True)
class EvalReport:
    """Per-category metric breakdown plus the cross-category average."""

    categories: dict  # category name -> CategoryResult
    config_digest: str = ""

    def __post_init__(self):
        if not self.categories:
            raise DataError("report needs at least one category")

    def average(self) -> CategoryResult:
        results = list(self.categories.values())
        return CategoryResult(
            pixel_auroc=float(np.mean([r.pixel_auroc for r in results])),
            image_auroc=float(np.mean([r.image_auroc for r in results])),
            pro_score=float(np.mean([r.pro_score for r in results])),
        )

    def as_dict(self) -> dict:
        return {
            "categories": {name: r.as_dict() for name, r in sorted(self.categories.items())},
            "average": self.average().as_dict(),
            "config_digest": self.config_digest,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    def format_table(self) -> str:
        """Plain-text table, one category per row, metrics as percentages."""
        width = max([len("Average")] + [len(str(n)) for n in self.categories])
        header = f"{'Category':<{width}}  {'Pixel AUROC':>11}  {'Image AUROC':>11}  {'PRO':>6}"
        rule = "-" * len(header)
        lines = [header, rule]
        for name in sorted(self.categories):
            r = self.categories[name]
            lines.append(
                f"{name:<{width}}  {100 * r.pixel_auroc:>11.1f}  "
                f"{100 * r.image_auroc:>11.1f}  {100 * r.pro_score:>6.1f}"
            )
        avg = self.average()
        lines.append(rule)
        lines.append(
            f"{'Average':<{width}}  {100 * avg.pixel_auroc:>11.1f}  "
            f"{100 * avg.image_auroc:>11.1f}  {100 * avg.pro_score:>6.1f}"
        )
        return "\n".join(lines)
