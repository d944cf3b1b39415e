import numpy as np
import pytest
from PIL import Image

from som_anomaly_extractor.backbone import FeatureExtractor


@pytest.fixture(scope="session")
def extractor():
    """One untrained, seeded backbone for the whole session (building it is slow)."""
    return FeatureExtractor(random_init_seed=0)


@pytest.fixture(scope="session")
def image_dir(tmp_path_factory):
    """A few synthetic 700x700 images: black, white, and seeded noise."""
    root = tmp_path_factory.mktemp("images")
    rng = np.random.default_rng(0)
    Image.new("RGB", (700, 700), (0, 0, 0)).save(root / "black.png")
    Image.new("RGB", (700, 700), (255, 255, 255)).save(root / "white.png")
    noise = rng.integers(0, 256, size=(700, 700, 3), dtype=np.uint8)
    Image.fromarray(noise).save(root / "noise.png")
    return root
