"""Wide-ResNet50-2 feature extraction from the first three residual stages."""

from __future__ import annotations

import hashlib

import numpy as np
import torch
from torchvision.models import wide_resnet50_2

from .errors import ExtractError

LAYER_CHANNELS = (256, 512, 1024)
LAYER_STRIDES = (4, 8, 16)


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class FeatureExtractor:
    """Frozen backbone emitting per-layer activation blocks.

    Weights come from a local checkpoint whose sha256 may be pinned for
    reproducibility; random_init_seed builds an untrained but deterministic
    backbone instead (format/plumbing runs without the checkpoint).
    """

    def __init__(self, weights_path=None, weights_sha256=None, random_init_seed=None,
                 device="cpu"):
        if weights_path is None and random_init_seed is None:
            raise ExtractError(
                "backbone weights required: pass weights_path (checksum-pinned checkpoint) "
                "or random_init_seed for an untrained backbone"
            )
        if random_init_seed is not None:
            torch.manual_seed(random_init_seed)
        self.device = torch.device(device)
        model = wide_resnet50_2(weights=None)
        if weights_path is not None:
            if weights_sha256 is not None:
                actual = file_sha256(weights_path)
                if actual != weights_sha256.lower():
                    raise ExtractError(
                        f"{weights_path}: sha256 {actual} does not match pinned "
                        f"{weights_sha256.lower()}"
                    )
            state = torch.load(weights_path, map_location="cpu", weights_only=True)
            model.load_state_dict(state)
        model.eval()
        model.requires_grad_(False)
        self.model = model.to(self.device)

    def layer_features(self, batch: torch.Tensor) -> list[np.ndarray]:
        """Per-image feature blocks [(256,h,w), (512,h/2,w/2), (1024,h/4,w/4)] lists.

        Returns one list of three float32 arrays per batch element.
        """
        if batch.ndim != 4 or batch.shape[1] != 3:
            raise ExtractError(f"expected (n, 3, H, W) input batch, got {tuple(batch.shape)}")
        m = self.model
        with torch.inference_mode():
            x = batch.to(self.device)
            x = m.maxpool(m.relu(m.bn1(m.conv1(x))))
            l1 = m.layer1(x)
            l2 = m.layer2(l1)
            l3 = m.layer3(l2)
        side = batch.shape[-1]
        outputs = []
        for layer_index, (feat, channels, stride) in enumerate(
            zip((l1, l2, l3), LAYER_CHANNELS, LAYER_STRIDES), start=1
        ):
            expected = (channels, side // stride, side // stride)
            if tuple(feat.shape[1:]) != expected:
                raise ExtractError(
                    f"layer {layer_index}: backbone produced {tuple(feat.shape[1:])}, "
                    f"expected {expected}"
                )
            outputs.append(feat.cpu().numpy().astype(np.float32))
        return [[outputs[j][i] for j in range(3)] for i in range(batch.shape[0])]
