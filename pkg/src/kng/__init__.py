"""Streaming anomaly detection with a k-means neural gas over patch features."""

__version__ = "0.1.0"

from .errors import (
    FormatError,
    KngError,
    MetricUndefinedError,
    NumericError,
    StateError,
    ValidationError,
)
from .harness import (
    SessionPlan,
    aggregate_repeats,
    evaluate_once,
    model_hash,
    run_sessions,
    strip_timing,
)
from .metrics import connected_components, pro_score, rocauc
from .model import (
    Assignment,
    BatchStats,
    KngConfig,
    KngModel,
    Neuron,
    TopologyGraph,
    UpdateReport,
    assign,
    batch_stats,
    init_model,
    load_model,
    merge_stats,
    model_from_bytes,
    model_to_bytes,
    online_update,
    prepare_features,
    save_model,
    update_thresholds,
)
from .scoring import ScoreConfig, gaussian_kernel, image_score, mahalanobis, precision, score_map
from .synth import SynthSpec, generate_synthetic
from .tensor_io import (
    ChannelSelection,
    ManifestItem,
    apply_selection,
    load_manifest,
    make_selection,
    read_tensor,
    save_manifest,
    write_tensor,
)

__all__ = [
    "Assignment",
    "BatchStats",
    "ChannelSelection",
    "FormatError",
    "KngConfig",
    "KngError",
    "KngModel",
    "ManifestItem",
    "MetricUndefinedError",
    "Neuron",
    "NumericError",
    "ScoreConfig",
    "SessionPlan",
    "StateError",
    "SynthSpec",
    "TopologyGraph",
    "UpdateReport",
    "ValidationError",
    "__version__",
    "aggregate_repeats",
    "apply_selection",
    "assign",
    "batch_stats",
    "connected_components",
    "evaluate_once",
    "gaussian_kernel",
    "generate_synthetic",
    "image_score",
    "init_model",
    "load_manifest",
    "load_model",
    "mahalanobis",
    "make_selection",
    "merge_stats",
    "model_from_bytes",
    "model_hash",
    "model_to_bytes",
    "online_update",
    "precision",
    "prepare_features",
    "pro_score",
    "read_tensor",
    "rocauc",
    "run_sessions",
    "save_manifest",
    "save_model",
    "score_map",
    "strip_timing",
    "update_thresholds",
    "write_tensor",
]
