"""Backbone feature extraction to the shared binary tensor format."""

from .backbone import FeatureExtractor, file_sha256
from .errors import ExtractError
from .preprocess import PreprocessSpec, load_image, preprocess
from .smdt import tensor_bytes, write_sidecar, write_tensor
from .verify import Finding, verify_dir, verify_file

__version__ = "0.1.0"

__all__ = [
    "ExtractError",
    "FeatureExtractor",
    "Finding",
    "PreprocessSpec",
    "file_sha256",
    "load_image",
    "preprocess",
    "tensor_bytes",
    "verify_dir",
    "verify_file",
    "write_sidecar",
    "write_tensor",
]
