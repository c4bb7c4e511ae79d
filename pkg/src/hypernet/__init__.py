"""Hypergraph neural networks with residual convolutions and multi-modal
fusion, plus a depth/label-ratio experiment harness.

The toolkit is organized as: ``hypergraph`` (incidence structures and the
normalized propagation operator), ``tensor`` (dense 2-D reverse-mode
autodiff), ``models`` (the four architectures), ``training`` (transductive
loop and metrics), ``data`` (synthetic generation and text persistence),
and ``cli`` (the ``hypernet`` command).
"""

from .errors import (
    HypernetError,
    NumericError,
    ParameterError,
    ShapeError,
    TapeError,
    ValidationError,
)
from .hypergraph import (
    DegreePair,
    Hypergraph,
    Laplacian,
    Modality,
    MultiModalDataset,
    build_knn_hypergraph,
    concat_modalities,
    degrees,
    laplacian,
)
from .tensor import (
    Tape,
    Tensor,
    add_bias,
    add_scaled,
    backward,
    dropout,
    matmul,
    relu,
    softmax_cross_entropy,
    total_sum,
)
from .models import (
    FAMILIES,
    RESIDUAL_FAMILIES,
    BranchParams,
    ConvParams,
    ModelConfig,
    ModelParams,
    ResSchedule,
    default_res_schedule,
    forward,
    fuse_mean,
    hgnn_conv_forward,
    init_params,
    res_conv_forward,
)
from .training import (
    AdamState,
    RunResult,
    TrainConfig,
    accuracy,
    adam_step,
    balanced_subset,
    init_adam_state,
    predict,
    sgd_step,
    train,
)
from .data import (
    DatasetManifest,
    ModalityFile,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    load_manifest,
    load_synthetic_spec,
    save_dataset,
    stratified_train_mask,
)

__version__ = "0.1.0"

__all__ = [
    "HypernetError", "NumericError", "ParameterError", "ShapeError",
    "TapeError", "ValidationError",
    "DegreePair", "Hypergraph", "Laplacian", "Modality", "MultiModalDataset",
    "build_knn_hypergraph", "concat_modalities", "degrees", "laplacian",
    "Tape", "Tensor", "add_bias", "add_scaled", "backward", "dropout",
    "matmul", "relu", "softmax_cross_entropy", "total_sum",
    "FAMILIES", "RESIDUAL_FAMILIES", "BranchParams", "ConvParams",
    "ModelConfig", "ModelParams", "ResSchedule", "default_res_schedule",
    "forward", "fuse_mean", "hgnn_conv_forward", "init_params",
    "res_conv_forward",
    "AdamState", "RunResult", "TrainConfig", "accuracy", "adam_step",
    "balanced_subset", "init_adam_state", "predict", "sgd_step", "train",
    "DatasetManifest", "ModalityFile", "SyntheticSpec", "generate_synthetic",
    "load_dataset", "load_manifest", "load_synthetic_spec", "save_dataset",
    "stratified_train_mask",
    "__version__",
]
