"""SOM-memory anomaly detection and localization over patch embeddings."""

from .config import RunConfig, load_config
from .detector import SomAnomalyDetector
from .embedding import (
    FeatureGallery,
    LayerFeatureMap,
    PatchGrid,
    assemble_embeddings,
    build_gallery,
    upsample_bilinear,
    upsample_nearest,
)
from .errors import ConfigError, DataError, SomAnomalyError, TensorFormatError
from .metrics import (
    CategoryResult,
    EvalReport,
    GroundTruth,
    auroc,
    connected_components,
    evaluate,
    pro_score,
)
from .scoring import (
    AnomalyMap,
    NodeStatistics,
    assign_gallery,
    fit_all_statistics,
    fit_node_statistics,
    gaussian_smooth,
    mahalanobis,
    patch_score,
    score_image,
)
from .som import (
    SomGrid,
    TrainSchedule,
    find_bmu,
    find_topk,
    init_positional,
    init_sample,
    quantization_error,
    train,
)
from .tensorio import ModelMeta, TensorFile, load_model, read_tensor, save_model, write_tensor

__version__ = "0.1.0"

__all__ = [
    "AnomalyMap",
    "CategoryResult",
    "ConfigError",
    "DataError",
    "EvalReport",
    "FeatureGallery",
    "GroundTruth",
    "LayerFeatureMap",
    "ModelMeta",
    "NodeStatistics",
    "PatchGrid",
    "RunConfig",
    "SomAnomalyDetector",
    "SomAnomalyError",
    "SomGrid",
    "TensorFile",
    "TensorFormatError",
    "TrainSchedule",
    "assemble_embeddings",
    "assign_gallery",
    "auroc",
    "build_gallery",
    "connected_components",
    "evaluate",
    "find_bmu",
    "find_topk",
    "fit_all_statistics",
    "fit_node_statistics",
    "gaussian_smooth",
    "init_positional",
    "init_sample",
    "load_config",
    "load_model",
    "mahalanobis",
    "patch_score",
    "pro_score",
    "quantization_error",
    "read_tensor",
    "save_model",
    "score_image",
    "train",
    "upsample_bilinear",
    "upsample_nearest",
    "write_tensor",
]
