"""Tape-based reverse-mode differentiation.

A :class:`Graph` is an append-only list of :class:`Node` objects. Nodes are created
in evaluation order, so the list is already topologically sorted and ``backward``
walks it in reverse.
"""

import numpy as np

# op tag -> True; every differentiable op registers itself in ops.py
SUPPORTED_OPS = {"const": True, "param": True}


class Node:
    __slots__ = ("graph", "value", "grad", "parents", "backward_fn", "op", "requires_grad", "name")
    __array_ufunc__ = None  # make numpy defer to the reflected Node operators

    def __init__(self, graph, value, parents=(), backward_fn=None, op="const", requires_grad=False, name=None):
        self.graph = graph
        self.value = value
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.value.shape})"

    # operator sugar; implementations live in ops.py
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)


class Graph:
    """Owns the node tape for one forward/backward cycle."""

    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self.nodes = []
        self.params = {}
        self._done = False

    def _append(self, node):
        if self._done:
            raise RuntimeError("graph already differentiated; build a new one")
        self.nodes.append(node)
        return node

    def constant(self, value):
        value = np.asarray(value, dtype=self.dtype)
        return self._append(Node(self, value))

    def param(self, store, name):
        node = self.params.get(name)
        if node is None:
            value = np.asarray(store[name], dtype=self.dtype)
            node = self._append(Node(self, value, op="param", requires_grad=True, name=name))
            self.params[name] = node
        return node

    def node(self, value, parents, backward_fn, op):
        if op not in SUPPORTED_OPS:
            raise ValueError(f"unsupported op tag {op!r}")
        needs = any(p.requires_grad for p in parents)
        return self._append(Node(self, value, tuple(parents), backward_fn if needs else None, op, needs))


def backward(graph, loss, store=None):
    """Accumulate d(loss)/d(node) into every node; copy parameter gradients into ``store``.

    Returns a dict name -> gradient array for all parameters used in the graph.
    """
    if loss.value.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.value.shape}")
    if graph._done:
        raise RuntimeError("backward already ran on this graph")
    loss.grad = np.ones_like(loss.value)
    for node in reversed(graph.nodes):
        if node.grad is None or node.backward_fn is None:
            continue
        if node.op not in SUPPORTED_OPS:
            raise ValueError(f"unsupported op tag {node.op!r}")
        grads = node.backward_fn(node.grad)
        for parent, g in zip(node.parents, grads):
            if g is None or not parent.requires_grad:
                continue
            if g.shape != parent.value.shape:
                raise RuntimeError(f"gradient shape {g.shape} != {parent.value.shape} in {node.op}")
            parent.grad = g if parent.grad is None else parent.grad + g
    graph._done = True
    grads = {}
    for name, node in graph.params.items():
        grads[name] = node.grad if node.grad is not None else np.zeros_like(node.value)
    if store is not None:
        store.set_grads(grads)
    return grads
