"""Python bindings for the flowcontrast C++ core."""

from ._core import (
    CheckFailed,
    ConfigError,
    DegenerateError,
    InvalidArgument,
    IoError,
    NumericError,
    SchemaError,
    compute_metrics,
    contrastive_loss,
    default_config,
    encode_graph,
    gradcheck,
    gromov_wd,
    kmeans,
    map_clusters,
    roc_auc,
    run,
    sinkhorn_wd,
)

__all__ = [
    "CheckFailed",
    "ConfigError",
    "DegenerateError",
    "InvalidArgument",
    "IoError",
    "NumericError",
    "SchemaError",
    "compute_metrics",
    "contrastive_loss",
    "default_config",
    "encode_graph",
    "gradcheck",
    "gromov_wd",
    "kmeans",
    "map_clusters",
    "roc_auc",
    "run",
    "sinkhorn_wd",
]
