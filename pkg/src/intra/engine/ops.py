"""Differentiable primitive catalog.

Every function takes tensors (or anything :func:`as_tensor` accepts),
computes the forward value with numpy, and records a vector-Jacobian
product for :func:`intra.engine.tensor.backward`. Broadcasting follows
numpy rules; gradients are summed back onto the original shapes.
"""

import numpy as np
from scipy.special import erf

from .tensor import ShapeError, Tensor, make_node

__all__ = [
    "as_tensor",
    "parameter",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "transpose",
    "reshape",
    "concat",
    "split",
    "softmax",
    "layer_norm",
    "gelu",
    "sigmoid",
    "relu",
    "sqrt",
    "mean",
    "sum_",
    "gather_rows",
    "pad_reflect",
    "correlate1d",
    "linear",
    "eval_primitive",
    "PRIMITIVES",
]

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT2PI = 0.3989422804014327


def as_tensor(x):
    """Wrap scalars/arrays as constant tensors; pass tensors through."""
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def parameter(data, name=None):
    """A leaf tensor that accumulates gradients."""
    return Tensor(data, requires_grad=True, name=name)


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(
        i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1
    )
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(
            f"{op}: shapes {a.shape} and {b.shape} do not broadcast"
        ) from None


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a.data, b.data)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return make_node("add", out, (a, b), vjp)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a.data, b.data)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return make_node("sub", out, (a, b), vjp)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a.data, b.data)
    out = a.data * b.data

    def vjp(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return make_node("mul", out, (a, b), vjp)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a.data, b.data)
    out = a.data / b.data

    def vjp(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        )

    return make_node("div", out, (a, b), vjp)


def neg(a):
    a = as_tensor(a)

    def vjp(g):
        return (-g,)

    return make_node("neg", -a.data, (a,), vjp)


def matmul(a, b):
    """Matrix product with numpy batch broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(
            f"matmul: operands must have rank >= 2, got {a.shape} @ {b.shape}"
        )
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            f"matmul: inner dimensions disagree: {a.shape} @ {b.shape}"
        )
    _check_broadcast("matmul", a.data[..., :1, :1], b.data[..., :1, :1])
    out = a.data @ b.data

    def vjp(g):
        da = g @ b.data.swapaxes(-1, -2)
        db = a.data.swapaxes(-1, -2) @ g
        return _unbroadcast(da, a.data.shape), _unbroadcast(db, b.data.shape)

    return make_node("matmul", out, (a, b), vjp)


def transpose(a, axes):
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def vjp(g):
        return (g.transpose(inverse),)

    return make_node("transpose", a.data.transpose(axes), (a,), vjp)


def reshape(a, shape):
    a = as_tensor(a)
    original = a.data.shape

    def vjp(g):
        return (g.reshape(original),)

    return make_node("reshape", a.data.reshape(shape), (a,), vjp)


def concat(tensors, axis):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, offsets, axis=axis))

    return make_node("concat", out, tuple(tensors), vjp)


def split(a, sections, axis):
    """Split into ``sections`` equal parts along ``axis``; returns a list."""
    a = as_tensor(a)
    if a.data.shape[axis] % sections != 0:
        raise ShapeError(
            f"split: axis {axis} of shape {a.data.shape} not divisible by {sections}"
        )
    pieces = np.split(a.data, sections, axis=axis)
    outs = []
    for i, piece in enumerate(pieces):

        def vjp(g, i=i):
            full = np.zeros_like(a.data)
            index = [slice(None)] * a.data.ndim
            width = a.data.shape[axis] // sections
            index[axis] = slice(i * width, (i + 1) * width)
            full[tuple(index)] = g
            return (full,)

        outs.append(make_node("split", piece, (a,), vjp))
    return outs


def softmax(a):
    """Softmax over the last axis."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - inner),)

    return make_node("softmax", out, (a,), vjp)


def layer_norm(a, scale, shift, eps=1e-5):
    """Normalize the last axis to zero mean / unit variance, then affine."""
    a, scale, shift = as_tensor(a), as_tensor(scale), as_tensor(shift)
    d = a.data.shape[-1]
    if scale.data.shape != (d,) or shift.data.shape != (d,):
        raise ShapeError(
            f"layer_norm: scale/shift must have shape ({d},), got "
            f"{scale.data.shape} and {shift.data.shape}"
        )
    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    normed = centered * inv
    out = normed * scale.data + shift.data

    def vjp(g):
        lead = tuple(range(g.ndim - 1))
        dscale = (g * normed).sum(axis=lead)
        dshift = g.sum(axis=lead)
        dn = g * scale.data
        da = inv * (
            dn
            - dn.mean(axis=-1, keepdims=True)
            - normed * (dn * normed).mean(axis=-1, keepdims=True)
        )
        return da, dscale, dshift

    return make_node("layer_norm", out, (a, scale, shift), vjp)


def gelu(a):
    """Exact erf-based GELU."""
    a = as_tensor(a)
    cdf = 0.5 * (1.0 + erf(a.data * _INV_SQRT2))
    out = a.data * cdf

    def vjp(g):
        pdf = np.exp(-0.5 * a.data * a.data) * _INV_SQRT2PI
        return (g * (cdf + a.data * pdf),)

    return make_node("gelu", out, (a,), vjp)


def sigmoid(a):
    a = as_tensor(a)
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def vjp(g):
        return (g * out * (1.0 - out),)

    return make_node("sigmoid", out, (a,), vjp)


def relu(a):
    a = as_tensor(a)
    out = np.maximum(a.data, 0.0)

    def vjp(g):
        return (g * (a.data > 0.0),)

    return make_node("relu", out, (a,), vjp)


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)

    def vjp(g):
        return (g * (0.5 / out),)

    return make_node("sqrt", out, (a,), vjp)


def _normalize_axis(axis, ndim):
    if axis is None:
        return None
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def _expand_reduced(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        for ax in sorted(axis):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axis = _normalize_axis(axis, a.ndim)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        return (_expand_reduced(g, a.data.shape, axis, keepdims).copy(),)

    return make_node("sum", out, (a,), vjp)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axis = _normalize_axis(axis, a.ndim)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        count = a.data.size
    else:
        count = int(np.prod([a.data.shape[ax] for ax in axis]))

    def vjp(g):
        return (_expand_reduced(g, a.data.shape, axis, keepdims) / count,)

    return make_node("mean", out, (a,), vjp)


def gather_rows(table, idx):
    """Select rows of a 2-D table by integer index array of any shape."""
    table = as_tensor(table)
    idx = np.asarray(idx)
    if table.ndim != 2:
        raise ShapeError(f"gather_rows: table must be 2-D, got {table.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError(
            f"gather_rows: index out of range [0, {table.shape[0]}): "
            f"min={idx.min()}, max={idx.max()}"
        )
    out = table.data[idx]

    def vjp(g):
        dt = np.zeros_like(table.data)
        np.add.at(dt, idx.reshape(-1), g.reshape(-1, table.data.shape[1]))
        return (dt,)

    return make_node("gather_rows", out, (table,), vjp)


def pad_reflect(a, pads):
    """Reflection padding (edge pixel not duplicated), per-axis widths."""
    a = as_tensor(a)
    pads = tuple((int(lo), int(hi)) for lo, hi in pads)
    if len(pads) != a.ndim:
        raise ShapeError(
            f"pad_reflect: need {a.ndim} pad pairs for shape {a.shape}, got {len(pads)}"
        )
    out = np.pad(a.data, pads, mode="reflect")
    cache = {}

    def vjp(g):
        idxmap = cache.get("idx")
        if idxmap is None:
            idxmap = np.pad(
                np.arange(a.data.size).reshape(a.data.shape), pads, mode="reflect"
            )
            cache["idx"] = idxmap
        da = np.zeros(a.data.size, dtype=g.dtype)
        np.add.at(da, idxmap.reshape(-1), g.reshape(-1))
        return (da.reshape(a.data.shape),)

    return make_node("pad_reflect", out, (a,), vjp)


def _correlate1d_valid(values, kernel, axis):
    moved = np.moveaxis(values, axis, -1)
    windows = np.lib.stride_tricks.sliding_window_view(
        moved, kernel.shape[0], axis=-1
    )
    out = np.einsum("...k,k->...", windows, kernel)
    return np.moveaxis(out, -1, axis)


def correlate1d(a, kernel, axis):
    """Valid-mode correlation with a fixed 1-D kernel along one axis."""
    a = as_tensor(a)
    kernel = np.asarray(kernel, dtype=a.data.dtype)
    if kernel.ndim != 1:
        raise ShapeError(f"correlate1d: kernel must be 1-D, got {kernel.shape}")
    k = kernel.shape[0]
    n = a.data.shape[axis]
    if n < k:
        raise ShapeError(
            f"correlate1d: axis {axis} extent {n} shorter than kernel {k}"
        )
    out = _correlate1d_valid(a.data, kernel, axis)

    def vjp(g):
        pad = [(0, 0)] * g.ndim
        pad[axis % g.ndim] = (k - 1, k - 1)
        gpad = np.pad(g, pad)
        return (_correlate1d_valid(gpad, kernel[::-1], axis),)

    return make_node("correlate1d", out, (a,), vjp)


def linear(x, w, b):
    """Affine map ``x @ w + b`` over the last axis."""
    return add(matmul(x, w), b)


PRIMITIVES = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "matmul": matmul,
    "transpose": transpose,
    "reshape": reshape,
    "concat": concat,
    "split": split,
    "softmax": softmax,
    "layer_norm": layer_norm,
    "gelu": gelu,
    "sigmoid": sigmoid,
    "relu": relu,
    "sqrt": sqrt,
    "mean": mean,
    "sum": sum_,
    "gather_rows": gather_rows,
    "pad_reflect": pad_reflect,
    "correlate1d": correlate1d,
}


def eval_primitive(tag, *inputs, **kwargs):
    """Apply a catalog primitive by tag; unknown tags raise KeyError."""
    try:
        fn = PRIMITIVES[tag]
    except KeyError:
        raise KeyError(f"unknown primitive tag: {tag!r}") from None
    return fn(*inputs, **kwargs)


def _radd(self, other):
    return add(other, self)


def _rsub(self, other):
    return sub(other, self)


def _rmul(self, other):
    return mul(other, self)


def _rtruediv(self, other):
    return div(other, self)


Tensor.__add__ = add
Tensor.__radd__ = _radd
Tensor.__sub__ = sub
Tensor.__rsub__ = _rsub
Tensor.__mul__ = mul
Tensor.__rmul__ = _rmul
Tensor.__truediv__ = div
Tensor.__rtruediv__ = _rtruediv
Tensor.__matmul__ = matmul
Tensor.__neg__ = neg
