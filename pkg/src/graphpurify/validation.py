"""Input checking helpers shared by the data structures and estimators."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, ContractError, ShapeError


def check_features(x) -> np.ndarray:
    """Validate a node-feature matrix and return it as float64."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"feature matrix must be 2-D, got shape {x.shape}")
    if x.shape[0] < 1:
        raise ContractError("graph must have at least one node")
    if not np.isfinite(x).all():
        raise ContractError("feature matrix contains NaN or Inf")
    return x


def check_adjacency(a, num_nodes: int | None = None) -> np.ndarray:
    """Validate a binary symmetric zero-diagonal adjacency matrix."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"adjacency must be square, got shape {a.shape}")
    if num_nodes is not None and a.shape[0] != num_nodes:
        raise ShapeError(
            f"adjacency is {a.shape[0]}x{a.shape[0]} but graph has {num_nodes} nodes")
    if not np.isin(a, (0.0, 1.0)).all():
        raise ContractError("adjacency entries must be 0 or 1")
    if not np.array_equal(a, a.T):
        raise ContractError("adjacency must be symmetric")
    if np.diagonal(a).any():
        raise ContractError("adjacency diagonal must be zero")
    return a


def check_label(y, num_classes: int | None = None) -> int:
    y = int(y)
    if y < 0:
        raise ContractError(f"label must be non-negative, got {y}")
    if num_classes is not None and y >= num_classes:
        raise ContractError(f"label {y} out of range for {num_classes} classes")
    return y


def check_fraction(value, name: str) -> float:
    value = float(value)
    if not 0.0 < value < 1.0:
        raise ConfigError(f"{name} must lie in (0, 1), got {value}")
    return value


def check_positive_int(value, name: str) -> int:
    value = int(value)
    if value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value}")
    return value
