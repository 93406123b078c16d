"""Minimal reverse-mode differentiation engine used by the FDIKP modules."""

from . import ops
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, grad_check
from .graph import Graph, Node, backward
from .optim import ParamStore, adam_step, lr_schedule, swa_average


class Scope:
    """Prefix-qualified view that resolves parameter names to graph nodes."""

    def __init__(self, graph, store, prefix=""):
        self.graph = graph
        self.store = store
        self.prefix = prefix

    def __call__(self, name):
        return self.graph.param(self.store, self.prefix + name)

    def has(self, name):
        return (self.prefix + name) in self.store

    def sub(self, prefix):
        return Scope(self.graph, self.store, self.prefix + prefix + ".")


__all__ = [
    "Graph", "Node", "backward", "ops", "ParamStore", "adam_step", "lr_schedule",
    "swa_average", "grad_check", "GradCheckReport", "save_checkpoint", "load_checkpoint", "Scope",
]
