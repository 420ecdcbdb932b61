"""Minimal reverse-mode automatic differentiation over numpy arrays."""

from . import ops
from .gradcheck import GradCheckError, GradCheckReport, grad_check
from .tensor import DomainError, Graph, Node, ShapeError, Tensor, as_tensor, backward, no_grad

__all__ = [
    "ops",
    "Tensor",
    "Graph",
    "Node",
    "ShapeError",
    "DomainError",
    "as_tensor",
    "backward",
    "no_grad",
    "grad_check",
    "GradCheckReport",
    "GradCheckError",
]
