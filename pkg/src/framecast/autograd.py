"""Reverse-mode differentiation over a dynamic tape of tensor operations.

Forward calls append nodes to a Tape in execution order, so node ids are
already topologically sorted and the backward sweep is a single reverse
walk. Gradients can be read at any recorded node, not just leaves, which
is what the gradient-propagation study relies on. A node that does not
influence the loss gets a zero gradient by definition.
"""

from __future__ import annotations

import math
import weakref

import numpy as np

from . import tensor
from .errors import ContractError, GraphError, ShapeError


class Node:
    """One recorded value. Ids are dense indices into the owning tape."""

    # The tape backref is weak so a dropped tape frees its arrays by
    # refcount alone; a multi-megabyte graph must not wait for the cyclic
    # collector's rare full passes.
    __slots__ = ("_tape", "id", "op", "parents", "value", "name", "_backward")

    def __init__(self, tape, nid, op, parents, value, name=None):
        self._tape = weakref.ref(tape)
        self.id = nid
        self.op = op
        self.parents = parents
        self.value = value
        self.name = name
        self._backward = None

    @property
    def tape(self):
        t = self._tape()
        if t is None:
            raise GraphError("the tape owning this node has been released")
        return t

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"<Node {self.id} {self.op}{tag} {self.value.shape} {self.value.dtype}>"


class Tape:
    """Append-only record of one forward computation."""

    def __init__(self):
        self.nodes = []

    def leaf(self, value, name=None):
        """Register an input tensor (parameter, frame, initial state)."""
        tensor.require_tensor(value, name or "leaf")
        return self._append("leaf", (), value, name=name)

    def node(self, ref):
        """Resolve a node or node id; unknown ids raise GraphError."""
        if isinstance(ref, Node):
            if ref.tape is not self:
                raise GraphError(f"node {ref.id} belongs to a different tape")
            return ref
        if not isinstance(ref, (int, np.integer)):
            raise GraphError(f"expected node or node id, got {type(ref).__name__}")
        if not 0 <= ref < len(self.nodes):
            raise GraphError(f"node id {ref} not on tape of {len(self.nodes)} nodes")
        return self.nodes[ref]

    def record(self, op, inputs, **kwargs):
        """Apply a named op to nodes already on this tape; returns the new node."""
        try:
            fn = _OPS[op]
        except KeyError:
            raise GraphError(f"unknown op {op!r}") from None
        return fn(*[self.node(i) for i in inputs], **kwargs)

    def _append(self, op, parents, value, name=None):
        node = Node(self, len(self.nodes), op, parents, value, name=name)
        self.nodes.append(node)
        return node


def _tape_of(*nodes):
    t = nodes[0].tape
    for n in nodes[1:]:
        if n.tape is not t:
            raise GraphError("operands live on different tapes")
    return t


def add(a, b):
    t = _tape_of(a, b)
    out = t._append("add", (a, b), tensor.add(a.value, b.value))
    out._backward = lambda g: (g, g)
    return out


def sub(a, b):
    t = _tape_of(a, b)
    out = t._append("sub", (a, b), tensor.sub(a.value, b.value))
    out._backward = lambda g: (g, -g)
    return out


def mul(a, b):
    t = _tape_of(a, b)
    out = t._append("mul", (a, b), tensor.mul(a.value, b.value))
    out._backward = lambda g: (g * b.value, g * a.value)
    return out


def scale(a, c):
    t = _tape_of(a)
    c = float(c)
    out = t._append("scale", (a,), tensor.scale(a.value, c))
    out._backward = lambda g: (tensor.scale(g, c),)
    return out


def one_minus(a):
    t = _tape_of(a)
    out = t._append("one_minus", (a,), tensor.one_minus(a.value))
    out._backward = lambda g: (-g,)
    return out


def sigmoid(a):
    t = _tape_of(a)
    val = tensor.sigmoid(a.value)
    out = t._append("sigmoid", (a,), val)
    out._backward = lambda g: (g * val * tensor.one_minus(val),)
    return out


def tanh(a):
    t = _tape_of(a)
    val = tensor.tanh(a.value)
    out = t._append("tanh", (a,), val)
    out._backward = lambda g: (g * (1.0 - val * val),)
    return out


def absolute(a):
    t = _tape_of(a)
    out = t._append("abs", (a,), np.abs(a.value))
    out._backward = lambda g: (g * np.sign(a.value),)
    return out


def conv2d(x, kernel, bias=None):
    """Same-padding convolution on the tape; bias node is optional."""
    parents = (x, kernel) if bias is None else (x, kernel, bias)
    t = _tape_of(*parents)
    val = tensor.conv2d(x.value, kernel.value, None if bias is None else bias.value)
    out = t._append("conv2d", parents, val)
    kh, kw = kernel.value.shape[2], kernel.value.shape[3]

    def back(g):
        gx = tensor.conv2d_input_grad(g, kernel.value)
        gk = tensor.conv2d_kernel_grad(g, x.value, kh, kw)
        if bias is None:
            return (gx, gk)
        return (gx, gk, g.sum(axis=(0, 2, 3)))

    out._backward = back
    return out


def concat(parts, axis=1):
    """Concatenate nodes along one axis; backward splits the gradient."""
    if not parts:
        raise ShapeError("concat needs at least one part")
    t = _tape_of(*parts)
    values = [p.value for p in parts]
    first = values[0]
    for v in values[1:]:
        if v.dtype != first.dtype:
            raise ShapeError(f"dtypes differ: {first.dtype} vs {v.dtype}")
        if v.ndim != first.ndim:
            raise ShapeError(f"ranks differ: {first.ndim} vs {v.ndim}")
        for ax in range(first.ndim):
            if ax != axis and v.shape[ax] != first.shape[ax]:
                raise ShapeError(f"extents differ off axis {axis}: {first.shape} vs {v.shape}")
    out = t._append("concat", tuple(parts), np.concatenate(values, axis=axis))
    offsets = np.cumsum([v.shape[axis] for v in values])[:-1]
    out._backward = lambda g: tuple(np.split(g, offsets, axis=axis))
    return out


def slice_channels(a, start, stop):
    """View of channels [start, stop) of a rank-4 node."""
    t = _tape_of(a)
    if a.value.ndim != 4:
        raise ShapeError(f"slice_channels needs rank 4, got {a.value.shape}")
    if not 0 <= start < stop <= a.value.shape[1]:
        raise ShapeError(f"channel range [{start}, {stop}) outside 0..{a.value.shape[1]}")
    out = t._append("slice_channels", (a,), np.ascontiguousarray(a.value[:, start:stop]))

    def back(g):
        gx = np.zeros_like(a.value)
        gx[:, start:stop] = g
        return (gx,)

    out._backward = back
    return out


def split_gates(a, n):
    """Split the channel axis into n equal gate blocks."""
    c = a.value.shape[1]
    if c % n != 0:
        raise ShapeError(f"{c} channels do not split into {n} blocks")
    d = c // n
    return [slice_channels(a, i * d, (i + 1) * d) for i in range(n)]


def sum_all(a):
    """Reduce to a single-element tensor of shape (1,)."""
    t = _tape_of(a)
    val = np.asarray(a.value.sum(dtype=a.value.dtype)).reshape(1)
    out = t._append("sum_all", (a,), val)
    out._backward = lambda g: (np.full(a.value.shape, g[0], dtype=a.value.dtype),)
    return out


def mean_all(a):
    return scale(sum_all(a), 1.0 / a.value.size)


class GradientReport:
    """Gradients and L2 norms for the nodes probed during one backward pass."""

    def __init__(self, tape, grads):
        self._tape = tape
        self._grads = grads

    def node_ids(self):
        return sorted(self._grads)

    def gradient(self, ref):
        node = self._tape.node(ref)
        if node.id not in self._grads:
            raise ContractError(f"node {node.id} was not probed")
        return self._grads[node.id]

    def norm(self, ref):
        g = self.gradient(ref)
        return float(math.sqrt(float(np.dot(g.reshape(-1), g.reshape(-1)))))


def backward(tape, loss, probes=()):
    """Reverse sweep from a scalar loss node; returns a GradientReport.

    probes lists the nodes whose gradients the report must carry. A probed
    node the loss does not reach reports a zero tensor. Probing extra nodes
    never changes any gradient, only what is retained.
    """
    loss = tape.node(loss)
    if loss.value.size != 1:
        raise ContractError(f"loss node must be scalar, got shape {loss.value.shape}")
    probe_nodes = [tape.node(p) for p in probes]
    keep = {n.id for n in probe_nodes}
    grads = {loss.id: np.ones_like(loss.value)}
    owned = {loss.id}
    for nid in range(loss.id, -1, -1):
        g = grads.get(nid)
        if g is None:
            continue
        node = tape.nodes[nid]
        if node._backward is not None:
            for parent, gp in zip(node.parents, node._backward(g)):
                if gp is None:
                    continue
                acc = grads.get(parent.id)
                if acc is None:
                    # first contribution may alias another array; copy on the
                    # second contribution instead of up front
                    grads[parent.id] = gp
                elif parent.id in owned:
                    np.add(acc, gp, out=acc)
                else:
                    grads[parent.id] = acc + gp
                    owned.add(parent.id)
        if nid != loss.id and nid not in keep:
            del grads[nid]
            owned.discard(nid)
    report = {}
    for node in probe_nodes:
        g = grads.get(node.id)
        report[node.id] = np.zeros_like(node.value) if g is None else g
    return GradientReport(tape, report)


def grad_norm_curve(report, groups):
    """Per-group L2 norms over concatenated gradients.

    groups is an ordered list of (label, [node refs]); returns a list of
    (label, norm) in the same order.
    """
    curve = []
    for label, refs in groups:
        total = 0.0
        for ref in refs:
            g = report.gradient(ref).reshape(-1)
            total += float(np.dot(g, g))
        curve.append((label, math.sqrt(total)))
    return curve


_OPS = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "scale": scale,
    "one_minus": one_minus,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "abs": absolute,
    "conv2d": conv2d,
    "concat": lambda *parts, axis=1: concat(list(parts), axis=axis),
    "slice_channels": slice_channels,
    "sum_all": sum_all,
}
