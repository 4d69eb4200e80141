"""Attention-weighted graph residual network toolkit.

Builds an electrode graph from multichannel signals, coarsens it into a
pooling hierarchy, and trains an attention-weighted residual network of
Chebyshev spectral graph convolutions on per-time-point samples, with a
reverse-mode autodiff engine, Adam training loop, EDF ingestion, and
evaluation/reporting tools.
"""

from .autodiff import Tape, Tensor, set_default_dtype
from .coarsening import (
    CoarseningHierarchy,
    build_permutation,
    graclus_coarsen,
    permute_node_signals,
    pool_pairs_max,
)
from .dataset import (
    SampleSet,
    SplitPlan,
    TrialRecord,
    extract_samples,
    load_samples,
    make_split,
    save_samples,
)
from .edf import EdfFile, parse_edf
from .graph import (
    ElectrodeGraph,
    ScaledLaplacian,
    build_graph,
    load_graph,
    max_eigenvalue,
    normalized_laplacian,
    pearson_adjacency,
    save_graph,
    scale_laplacian,
)
from .layers import (
    AttentionParams,
    ChebConvParams,
    attention_forward,
    cheb_conv_forward,
    residual_block_forward,
)
from .metrics import MetricsReport, compute_metrics, confusion_matrix
from .model import AttentionGraphResNet, ModelConfig, model1_config, model2_config
from .synth import make_synthetic_dataset, nearest_centroid_accuracy
from .training import AdamState, LossConfig, TrainConfig, adam_step, cross_entropy_l2, train

__all__ = [
    "AdamState",
    "AttentionGraphResNet",
    "AttentionParams",
    "ChebConvParams",
    "CoarseningHierarchy",
    "EdfFile",
    "ElectrodeGraph",
    "LossConfig",
    "MetricsReport",
    "ModelConfig",
    "SampleSet",
    "ScaledLaplacian",
    "SplitPlan",
    "Tape",
    "Tensor",
    "TrainConfig",
    "TrialRecord",
    "adam_step",
    "attention_forward",
    "build_graph",
    "build_permutation",
    "cheb_conv_forward",
    "compute_metrics",
    "confusion_matrix",
    "cross_entropy_l2",
    "extract_samples",
    "graclus_coarsen",
    "load_graph",
    "load_samples",
    "make_split",
    "make_synthetic_dataset",
    "max_eigenvalue",
    "model1_config",
    "model2_config",
    "nearest_centroid_accuracy",
    "normalized_laplacian",
    "parse_edf",
    "pearson_adjacency",
    "permute_node_signals",
    "pool_pairs_max",
    "residual_block_forward",
    "save_graph",
    "save_samples",
    "scale_laplacian",
    "set_default_dtype",
    "train",
]
