"""Deterministic image preprocessing: square resize, center crop, normalize."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from PIL import Image
from torchvision.transforms import functional as TF

from .errors import ExtractError

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class PreprocessSpec:
    """Pinned preprocessing parameters; no augmentation, pure function of bytes."""

    resize_to: int = 256
    crop_to: int = 224
    mean: tuple = IMAGENET_MEAN
    std: tuple = IMAGENET_STD
    # bilinear with antialiasing; feature values depend on this choice, so it
    # is pinned here and recorded in every tensor's sidecar metadata
    interpolation: str = "bilinear-antialias"

    def sidecar_line(self) -> str:
        return (
            f"resize={self.resize_to} crop={self.crop_to} "
            f"interpolation={self.interpolation} "
            f"mean={','.join(str(v) for v in self.mean)} "
            f"std={','.join(str(v) for v in self.std)}"
        )


def load_image(path) -> Image.Image:
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except Exception as exc:
        raise ExtractError(f"{path}: cannot decode image ({exc})") from exc


def preprocess(image: Image.Image, spec: PreprocessSpec = PreprocessSpec()) -> torch.Tensor:
    """(3, crop, crop) float tensor: resize to a square, center crop, normalize."""
    resized = TF.resize(
        image,
        [spec.resize_to, spec.resize_to],
        interpolation=TF.InterpolationMode.BILINEAR,
        antialias=True,
    )
    cropped = TF.center_crop(resized, [spec.crop_to, spec.crop_to])
    tensor = TF.to_tensor(cropped)
    return TF.normalize(tensor, list(spec.mean), list(spec.std))
