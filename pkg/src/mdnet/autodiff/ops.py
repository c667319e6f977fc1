"""Differentiable primitives over :class:`~mdnet.autodiff.tensor.Tensor`.

Each function validates shapes up front (raising :class:`ShapeError`
with the op kind and offending dims), computes the forward value with
numpy, and registers a backward closure.  ``tensor_op`` dispatches by
kind name; ``PRIMITIVE_KINDS`` lists every kind so the gradient test
suite can enumerate them.

Convolutional ops use NCHW layout.  ``batch_norm`` normalizes per
channel over batch and spatial axes; in train mode it also updates the
running statistics held by its :class:`BnState` (a side effect outside
the tape, so eval-mode forwards stay pure).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, accumulate, make_node


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""

    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# elementwise and arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None

    def bw(g):
        accumulate(a, _unbroadcast(g, a.data.shape))
        accumulate(b, _unbroadcast(g, b.data.shape))

    return make_node(data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast") from None

    def bw(g):
        accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return make_node(data, (a, b), bw)


def scale(x: Tensor, alpha: float) -> Tensor:
    alpha = float(alpha)

    def bw(g):
        accumulate(x, alpha * g)

    return make_node(x.data * alpha, (x,), bw)


def log(x: Tensor) -> Tensor:
    def bw(g):
        accumulate(x, g / x.data)

    return make_node(np.log(x.data), (x,), bw)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def bw(g):
        accumulate(x, g * mask)

    return make_node(np.where(mask, x.data, 0.0), (x,), bw)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def bw(g):
        accumulate(x, g * (1.0 - y * y))

    return make_node(y, (x,), bw)


def sigmoid(x: Tensor) -> Tensor:
    y = np.where(x.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(x.data))),
                 np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))))

    def bw(g):
        accumulate(x, g * y * (1.0 - y))

    return make_node(y, (x,), bw)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if x.data.shape == () or x.data.shape[axis] == 0:
        raise ShapeError(f"softmax: empty axis {axis} for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        accumulate(x, y * (g - inner))

    return make_node(y, (x,), bw)


# ---------------------------------------------------------------------------
# reductions and shape ops


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is None:
            accumulate(x, np.broadcast_to(g, x.data.shape).copy())
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            accumulate(x, np.broadcast_to(g, x.data.shape).copy())

    return make_node(data, (x,), bw)


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.data.shape[a] for a in axes]))
    return scale(tsum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)

    def bw(g):
        accumulate(x, g.reshape(x.data.shape))

    return make_node(x.data.reshape(shape), (x,), bw)


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def bw(g):
        accumulate(x, g.transpose(inverse))

    return make_node(x.data.transpose(axes), (x,), bw)


def concat(tensors, axis: int) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: empty input list")
    base = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != len(base) or any(
            i != axis and other[i] != base[i] for i in range(len(base))
        ):
            raise ShapeError(
                f"concat_channels: incompatible shapes {tensors[0].shape} vs {t.shape} on axis {axis}"
            )
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(start, stop)
            accumulate(t, g[tuple(idx)])

    return make_node(data, tuple(tensors), bw)


def concat_channels(tensors) -> Tensor:
    """Concatenate along the channel axis: axis 0 for CHW, axis 1 otherwise."""

    rank = len(as_tensor(tensors[0]).shape)
    return concat(tensors, axis=0 if rank == 3 else 1)


def slice_axis(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    if start < 0 or start + length > x.data.shape[axis]:
        raise ShapeError(
            f"slice_axis: [{start}:{start + length}] out of range for axis {axis} of shape {x.shape}"
        )
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def bw(g):
        full = np.zeros_like(x.data)
        full[idx] = g
        accumulate(x, full)

    return make_node(x.data[idx].copy(), (x,), bw)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    data = a.data @ b.data

    def bw(g):
        accumulate(a, g @ b.data.T)
        accumulate(b, a.data.T @ g)

    return make_node(data, (a, b), bw)


def bmm(a: Tensor, b: Tensor) -> Tensor:
    if (
        a.data.ndim != 3
        or b.data.ndim != 3
        or a.data.shape[0] != b.data.shape[0]
        or a.data.shape[2] != b.data.shape[1]
    ):
        raise ShapeError(f"bmm: incompatible shapes {a.shape} x {b.shape}")
    data = a.data @ b.data

    def bw(g):
        accumulate(a, g @ b.data.transpose(0, 2, 1))
        accumulate(b, a.data.transpose(0, 2, 1) @ g)

    return make_node(data, (a, b), bw)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w (+ b)`` for a single vector or a batch of rows."""

    vector = x.data.ndim == 1
    xd = x.data[None, :] if vector else x.data
    if xd.ndim != 2 or w.data.ndim != 2 or xd.shape[1] != w.data.shape[0]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {w.shape}")
    if b is not None and b.data.shape != (w.data.shape[1],):
        raise ShapeError(f"linear: bias {b.shape} incompatible with weight {w.shape}")
    data = xd @ w.data
    if b is not None:
        data = data + b.data
    if vector:
        data = data[0]

    def bw(g):
        gm = g[None, :] if vector else g
        accumulate(x, (gm @ w.data.T)[0] if vector else gm @ w.data.T)
        accumulate(w, xd.T @ gm)
        if b is not None:
            accumulate(b, gm.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return make_node(data, parents, bw)


# ---------------------------------------------------------------------------
# convolutional stack


def conv2d(x: Tensor, w: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D convolution, NCHW input, weight (out_ch, in_ch, kh, kw)."""

    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d: need 4-d input/weight, got {x.shape} and {w.shape}")
    n, c, h, wdt = x.data.shape
    f, cw, kh, kw = w.data.shape
    if c != cw:
        raise ShapeError(f"conv2d: input channels {c} != weight channels {cw}")
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wdt + 2 * pad - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} too large for input {h}x{wdt} with pad {pad}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    cols = np.empty((n, c, kh, kw, ho, wo))
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    data = np.tensordot(cols, w.data, axes=([1, 2, 3], [1, 2, 3])).transpose(0, 3, 1, 2)

    def bw(g):
        accumulate(w, np.tensordot(g, cols, axes=([0, 2, 3], [0, 4, 5])))
        gw = np.tensordot(g, w.data, axes=([1], [0]))  # (n, ho, wo, c, kh, kw)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += (
                    gw[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                )
        accumulate(x, dxp[:, :, pad : pad + h, pad : pad + wdt] if pad else dxp)

    return make_node(np.ascontiguousarray(data), (x, w), bw)


def avg_pool2(x: Tensor) -> Tensor:
    """2x2 average pooling with stride 2 (NCHW); spatial dims must be even."""

    if x.data.ndim != 4:
        raise ShapeError(f"avg_pool2: need 4-d input, got {x.shape}")
    n, c, h, w = x.data.shape
    if h % 2 or w % 2:
        raise ShapeError(f"avg_pool2: odd spatial dims {h}x{w}")
    data = 0.25 * (
        x.data[:, :, 0::2, 0::2]
        + x.data[:, :, 0::2, 1::2]
        + x.data[:, :, 1::2, 0::2]
        + x.data[:, :, 1::2, 1::2]
    )

    def bw(g):
        accumulate(x, 0.25 * np.repeat(np.repeat(g, 2, axis=2), 2, axis=3))

    return make_node(data, (x,), bw)


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the trailing two (spatial) axes."""

    if x.data.ndim < 2:
        raise ShapeError(f"global_avg_pool: need spatial dims, got shape {x.shape}")
    m = x.data.shape[-1] * x.data.shape[-2]

    def bw(g):
        accumulate(x, np.broadcast_to(g[..., None, None] / m, x.data.shape).copy())

    return make_node(x.data.mean(axis=(-2, -1)), (x,), bw)


@dataclass
class BnState:
    """Running statistics carried by a batch_norm call site."""

    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5
    momentum: float = 0.9

    @classmethod
    def for_channels(cls, channels: int, eps: float = 1e-5, momentum: float = 0.9) -> "BnState":
        return cls(np.zeros(channels), np.ones(channels), eps, momentum)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BnState, training: bool) -> Tensor:
    """Per-channel batch normalization over NCHW batch and spatial axes."""

    if x.data.ndim != 4:
        raise ShapeError(f"batch_norm: need 4-d input, got {x.shape}")
    c = x.data.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(
            f"batch_norm: gamma/beta {gamma.shape}/{beta.shape} do not match {c} channels"
        )
    axes = (0, 2, 3)
    gam = gamma.data[None, :, None, None]
    if training:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        state.running_mean = state.momentum * state.running_mean + (1 - state.momentum) * mean
        state.running_var = state.momentum * state.running_var + (1 - state.momentum) * var
    else:
        mean, var = state.running_mean, state.running_var
    ivar = 1.0 / np.sqrt(var + state.eps)
    xhat = (x.data - mean[None, :, None, None]) * ivar[None, :, None, None]
    data = gam * xhat + beta.data[None, :, None, None]
    m = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]

    def bw(g):
        accumulate(gamma, (g * xhat).sum(axis=axes))
        accumulate(beta, g.sum(axis=axes))
        dxhat = g * gam
        if training:
            s1 = dxhat.sum(axis=axes)[None, :, None, None]
            s2 = (dxhat * xhat).sum(axis=axes)[None, :, None, None]
            dx = (ivar[None, :, None, None] / m) * (m * dxhat - s1 - xhat * s2)
        else:
            dx = dxhat * ivar[None, :, None, None]
        accumulate(x, dx)

    return make_node(data, (x, gamma, beta), bw)


# ---------------------------------------------------------------------------
# lookup and losses


def embed_lookup(table: Tensor, ids) -> Tensor:
    """Gather rows of ``table`` (any rank) by an integer id array."""

    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise ShapeError(
            f"embed_lookup: id out of range [0, {table.data.shape[0]}) in {ids}"
        )
    data = table.data[ids]

    def bw(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, ids, g)

    return make_node(data.copy(), (table,), bw)


def nll_loss(probs: Tensor, labels) -> Tensor:
    """Negative log probability of the labelled class (last axis).

    A 1-d probability vector with a scalar label yields a scalar; an
    (N, V) batch with an (N,) label array yields per-item losses (N,).
    """

    labels = np.asarray(labels, dtype=np.int64)
    v = probs.data.shape[-1]
    if labels.shape != probs.data.shape[:-1]:
        raise ShapeError(
            f"nll_loss: labels {labels.shape} do not index probs {probs.shape}"
        )
    if labels.size and (labels.min() < 0 or labels.max() >= v):
        raise ShapeError(f"nll_loss: label out of range [0, {v})")
    taken = np.take_along_axis(
        probs.data.reshape(-1, v), labels.reshape(-1, 1), axis=1
    ).reshape(labels.shape)
    data = -np.log(taken)

    def bw(g):
        flat = np.zeros_like(probs.data).reshape(-1, v)
        np.put_along_axis(
            flat, labels.reshape(-1, 1), (-(np.asarray(g)) / taken).reshape(-1, 1), axis=1
        )
        accumulate(probs, flat.reshape(probs.data.shape))

    return make_node(data, (probs,), bw)


# ---------------------------------------------------------------------------
# kind dispatcher


def _op_conv2d(inputs, attrs):
    return conv2d(inputs[0], inputs[1], stride=attrs.get("stride", 1), pad=attrs.get("pad", 0))


def _op_linear(inputs, attrs):
    return linear(*inputs)


def _op_batch_norm(inputs, attrs):
    return batch_norm(inputs[0], inputs[1], inputs[2], attrs["state"], attrs.get("training", True))


PRIMITIVE_KINDS = {
    "add": lambda inputs, attrs: add(*inputs),
    "mul": lambda inputs, attrs: mul(*inputs),
    "scale": lambda inputs, attrs: scale(inputs[0], attrs["alpha"]),
    "log": lambda inputs, attrs: log(inputs[0]),
    "relu": lambda inputs, attrs: relu(inputs[0]),
    "tanh": lambda inputs, attrs: tanh(inputs[0]),
    "sigmoid": lambda inputs, attrs: sigmoid(inputs[0]),
    "softmax": lambda inputs, attrs: softmax(inputs[0], attrs.get("axis", -1)),
    "sum": lambda inputs, attrs: tsum(inputs[0], attrs.get("axis"), attrs.get("keepdims", False)),
    "mean": lambda inputs, attrs: tmean(inputs[0], attrs.get("axis"), attrs.get("keepdims", False)),
    "reshape": lambda inputs, attrs: reshape(inputs[0], attrs["shape"]),
    "transpose": lambda inputs, attrs: transpose(inputs[0], attrs["axes"]),
    "concat_channels": lambda inputs, attrs: concat_channels(inputs),
    "slice_axis": lambda inputs, attrs: slice_axis(
        inputs[0], attrs["axis"], attrs["start"], attrs["length"]
    ),
    "matmul": lambda inputs, attrs: matmul(*inputs),
    "bmm": lambda inputs, attrs: bmm(*inputs),
    "linear": _op_linear,
    "conv2d": _op_conv2d,
    "avg_pool2": lambda inputs, attrs: avg_pool2(inputs[0]),
    "global_avg_pool": lambda inputs, attrs: global_avg_pool(inputs[0]),
    "batch_norm": _op_batch_norm,
    "embed_lookup": lambda inputs, attrs: embed_lookup(inputs[0], attrs["ids"]),
    "nll_loss": lambda inputs, attrs: nll_loss(inputs[0], attrs["labels"]),
}


def tensor_op(kind: str, inputs, attrs: dict | None = None) -> Tensor:
    """Uniform entry point: apply a primitive by kind name."""

    if kind not in PRIMITIVE_KINDS:
        raise ShapeError(f"unknown primitive kind {kind!r}")
    return PRIMITIVE_KINDS[kind]([as_tensor(t) for t in inputs], attrs or {})
