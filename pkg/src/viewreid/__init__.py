"""View-aware vehicle re-identification on explicit numpy arrays.

The package turns feature maps and per-view masks into embeddings (one
global vector, four masked view vectors, four visibility scores), compares
them with a fused global-plus-attention-weighted-local distance, and scores
retrieval with CMC and mAP. A small trainable embedder, a synthetic dataset
generator and a CLI tie the pieces into an end-to-end pipeline.
"""

from ._kernels import NUMBA_ENABLED, backend_name
from .distance import (
    DEFAULT_LAMBDA1,
    DEFAULT_LAMBDA2,
    FusionWeights,
    common_visible_scores,
    distance_matrix,
    euclidean,
    fused_distance,
    l2_normalized,
    local_distance,
    pack_embeddings,
)
from .errors import ViewReidError
from .evaluation import EvalReport, average_precision, distance_heatmap, evaluate
from .formats import (
    read_manifest,
    read_tensor,
    write_manifest,
    write_pgm,
    write_tensor,
)
from .losses import (
    DEFAULT_MARGIN,
    LOCAL_MODES,
    Batch,
    LossOutput,
    global_triplet,
    id_loss,
    local_triplet,
    total_loss,
)
from .pooling import (
    downsample_masks,
    embed,
    global_average_pool,
    mask_average_pool,
    visibility_scores,
)
from .synthetic import (
    SyntheticDataset,
    SyntheticIdentity,
    Viewpoint,
    build_dataset,
    generate_dataset,
    render_observation,
    view_visibilities,
)
from .trainer import ToyEmbedder, TrainConfig, load_model, save_model, train
from .types import (
    NUM_VIEWS,
    VIEW_NAMES,
    DatasetManifest,
    DistanceMatrix,
    FeatureMap,
    FullResMaskSet,
    ImageRecord,
    ViewEmbedding,
    ViewMaskSet,
)

__version__ = "0.1.0"

__all__ = [
    "NUMBA_ENABLED",
    "backend_name",
    "DEFAULT_LAMBDA1",
    "DEFAULT_LAMBDA2",
    "FusionWeights",
    "common_visible_scores",
    "distance_matrix",
    "euclidean",
    "fused_distance",
    "l2_normalized",
    "local_distance",
    "pack_embeddings",
    "ViewReidError",
    "EvalReport",
    "average_precision",
    "distance_heatmap",
    "evaluate",
    "read_manifest",
    "read_tensor",
    "write_manifest",
    "write_pgm",
    "write_tensor",
    "DEFAULT_MARGIN",
    "LOCAL_MODES",
    "Batch",
    "LossOutput",
    "global_triplet",
    "id_loss",
    "local_triplet",
    "total_loss",
    "downsample_masks",
    "embed",
    "global_average_pool",
    "mask_average_pool",
    "visibility_scores",
    "SyntheticDataset",
    "SyntheticIdentity",
    "Viewpoint",
    "build_dataset",
    "generate_dataset",
    "render_observation",
    "view_visibilities",
    "ToyEmbedder",
    "TrainConfig",
    "load_model",
    "save_model",
    "train",
    "NUM_VIEWS",
    "VIEW_NAMES",
    "DatasetManifest",
    "DistanceMatrix",
    "FeatureMap",
    "FullResMaskSet",
    "ImageRecord",
    "ViewEmbedding",
    "ViewMaskSet",
    "__version__",
]
