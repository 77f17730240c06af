"""Dual-path (spatial + frequency) image deraining network, from scratch."""

from .tensor import ConfigError, GraphError, ShapeError, Tensor, as_tensor

__all__ = ["Tensor", "as_tensor", "ShapeError", "GraphError", "ConfigError"]
__version__ = "0.1.0"
