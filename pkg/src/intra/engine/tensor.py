"""Dense tensors carrying a reverse-mode differentiation graph.

A :class:`Tensor` wraps a numpy array together with the primitive that
produced it, references to its inputs, and a slot for the gradient filled
in by :func:`backward`. Primitives live in :mod:`intra.engine.ops`; every
primitive checks its output for NaN/Inf so numeric trouble surfaces at the
op that caused it instead of propagating silently.

The engine computes in float32 by default. Gradient verification runs in
float64 via the :func:`precision` context manager, which switches the dtype
used for every tensor created inside the block.
"""

import contextlib

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "NumericError",
    "backward",
    "precision",
    "no_grad",
    "default_dtype",
    "grad_enabled",
]


class ShapeError(ValueError):
    """Operand shapes are invalid for the primitive that received them."""


class NumericError(ArithmeticError):
    """A primitive produced NaN or Inf from finite inputs."""


_state = {"dtype": np.float32, "grad": True}


def default_dtype():
    """Dtype used for tensors created under the current precision mode."""
    return _state["dtype"]


def grad_enabled():
    return _state["grad"]


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the engine-wide dtype ("float32" or "float64")."""
    wanted = np.dtype(dtype).type
    if wanted not in (np.float32, np.float64):
        raise ValueError(f"unsupported engine dtype: {dtype}")
    previous = _state["dtype"]
    _state["dtype"] = wanted
    try:
        yield
    finally:
        _state["dtype"] = previous


@contextlib.contextmanager
def no_grad():
    """Disable graph recording; ops return plain value tensors."""
    previous = _state["grad"]
    _state["grad"] = False
    try:
        yield
    finally:
        _state["grad"] = previous


class Tensor:
    """A numpy array plus the graph node that produced it.

    ``op`` is the primitive tag (``None`` for leaves), ``parents`` the input
    tensors, and ``vjp`` a function mapping the output gradient to one
    gradient per parent. ``grad`` is populated by :func:`backward`.
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "parents", "vjp", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=default_dtype())
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.op = None
        self.parents = ()
        self.vjp = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return self.data.item()

    def numpy(self):
        """A defensive copy of the underlying array."""
        return np.array(self.data)

    def set_data(self, values):
        """Replace the stored values in place (shape must match)."""
        arr = np.asarray(values, dtype=self.data.dtype)
        if arr.shape != self.data.shape:
            raise ShapeError(
                f"set_data: expected shape {self.data.shape}, got {arr.shape}"
            )
        self.data = arr

    def __repr__(self):
        tag = self.name or self.op or "leaf"
        return f"Tensor({tag}, shape={self.data.shape}, dtype={self.data.dtype})"

    # Arithmetic operators are attached by intra.engine.ops at import time.


def make_node(op, out_data, parents, vjp):
    """Create the result tensor of a primitive, with finiteness check.

    ``vjp(grad) -> tuple`` must return one gradient array (or None) per
    parent; it is dropped when no parent requires a gradient or recording
    is disabled.
    """
    if not np.all(np.isfinite(out_data)):
        raise NumericError(f"primitive '{op}' produced a non-finite value")
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    out.name = None
    if _state["grad"] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.op = op
        out.parents = tuple(parents)
        out.vjp = vjp
    else:
        out.requires_grad = False
        out.op = op
        out.parents = ()
        out.vjp = None
    return out


def _toposort(root):
    """Post-order over the recorded graph, iterative to keep stack depth flat."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss, params=None):
    """Accumulate d(loss)/d(node) through the graph by reverse traversal.

    ``loss`` must be a scalar tensor. Every tensor with ``requires_grad``
    reachable from ``loss`` gets its ``grad`` slot filled. Returns a dict
    mapping each tensor in ``params`` (default: all reachable leaves with
    ``requires_grad``) to its gradient array; parameters the loss never
    touched map to zeros.
    """
    if loss.data.ndim != 0:
        raise ShapeError(
            f"backward requires a scalar loss, got shape {loss.data.shape}"
        )
    order = _toposort(loss)
    pending = {id(loss): np.ones((), dtype=loss.data.dtype)}
    settled = {}
    for node in reversed(order):
        grad = pending.pop(id(node), None)
        if grad is None:
            continue
        settled[id(node)] = grad
        if node.requires_grad:
            node.grad = grad
        if node.vjp is None:
            continue
        parent_grads = node.vjp(grad)
        for parent, pgrad in zip(node.parents, parent_grads):
            if pgrad is None or not parent.requires_grad:
                continue
            if not np.all(np.isfinite(pgrad)):
                raise NumericError(
                    f"gradient through primitive '{node.op}' is non-finite"
                )
            held = pending.get(id(parent))
            pending[id(parent)] = pgrad if held is None else held + pgrad

    if params is None:
        params = [n for n in order if n.requires_grad and n.op is None]
    result = {}
    for p in params:
        grad = settled.get(id(p))
        if grad is None:
            grad = np.zeros_like(p.data)
            p.grad = grad
        result[p] = grad
    return result
