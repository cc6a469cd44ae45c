"""Spatial-temporal hypergraph learning for multichannel time series."""

from ._sthl import (
    Model,
    edge_weights,
    generate_synthetic,
    load_dataset,
    pearson_adjacency,
    reconstruction_error,
    save_dataset,
    total_loss,
)

__all__ = [
    "Model",
    "edge_weights",
    "generate_synthetic",
    "load_dataset",
    "pearson_adjacency",
    "reconstruction_error",
    "save_dataset",
    "total_loss",
]
