"""Differentiable operations over `Tensor`.

Every op checks shapes eagerly, computes the forward value with numpy and
registers a backward rule returning one gradient per input. Binary ops
accept the limited broadcasting the flow needs: identical shapes, a
length-c row vector against a (n, c) matrix, or a single-element tensor
against anything.
"""
from typing import Sequence, Tuple

import numpy as np

from errors import NumericError, ShapeError
from .tensor import Tensor, as_tensor


def _reduce_to(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if int(np.prod(shape)) == 1:
        return np.asarray(grad.sum()).reshape(shape)
    # row vector broadcast over the leading axis
    return grad.sum(axis=0).reshape(shape)


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> Tuple[int, ...]:
    if a.shape == b.shape:
        return a.shape
    if b.data.size == 1 and b.ndim <= 1:
        return a.shape
    if a.data.size == 1 and a.ndim <= 1:
        return b.shape
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return a.shape
    if b.ndim == 2 and a.ndim == 1 and b.shape[1] == a.shape[0]:
        return b.shape
    raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    out = a.data + b.data

    def backward_fn(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return Tensor.from_op(out, (a, b), backward_fn, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    out = a.data - b.data

    def backward_fn(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return Tensor.from_op(out, (a, b), backward_fn, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    a_data, b_data = a.data, b.data
    out = a_data * b_data

    def backward_fn(g):
        return _reduce_to(g * b_data, a.shape), _reduce_to(g * a_data, b.shape)

    return Tensor.from_op(out, (a, b), backward_fn, "mul")


def neg(a: Tensor) -> Tensor:
    return Tensor.from_op(-a.data, (a,), lambda g: (-g,), "neg")


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return Tensor.from_op(a.data * factor, (a,), lambda g: (g * factor,), "scale")


def add_scalar(a: Tensor, value: float) -> Tensor:
    return Tensor.from_op(a.data + float(value), (a,), lambda g: (g,), "add_scalar")


def square(a: Tensor) -> Tensor:
    a_data = a.data
    return Tensor.from_op(a_data * a_data, (a,), lambda g: (2.0 * a_data * g,), "square")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    a_data, b_data = a.data, b.data
    out = a_data @ b_data

    def backward_fn(g):
        return g @ b_data.T, a_data.T @ g

    return Tensor.from_op(out, (a, b), backward_fn, "matmul")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return Tensor.from_op(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise NumericError(f"log: non-positive input (min {a.data.min()})")
    a_data = a.data
    return Tensor.from_op(np.log(a_data), (a,), lambda g: (g / a_data,), "log")


def log_abs(a: Tensor) -> Tensor:
    if np.any(a.data == 0):
        raise NumericError("log_abs: zero input")
    a_data = a.data
    return Tensor.from_op(np.log(np.abs(a_data)), (a,), lambda g: (g / a_data,), "log_abs")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return Tensor.from_op(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return Tensor.from_op(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def softplus(a: Tensor) -> Tensor:
    a_data = a.data
    out = np.logaddexp(0.0, a_data)
    slope = 0.5 * (1.0 + np.tanh(0.5 * a_data))
    return Tensor.from_op(out, (a,), lambda g: (g * slope,), "softplus")


def sum(a: Tensor) -> Tensor:
    shape = a.shape
    return Tensor.from_op(np.asarray(a.data.sum()), (a,), lambda g: (np.full(shape, float(g)),), "sum")


def mean(a: Tensor) -> Tensor:
    shape, count = a.shape, a.data.size
    return Tensor.from_op(np.asarray(a.data.mean()), (a,), lambda g: (np.full(shape, float(g) / count),), "mean")


def row_sum(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"row_sum: expected a matrix, got shape {a.shape}")
    cols = a.shape[1]
    return Tensor.from_op(a.data.sum(axis=1), (a,), lambda g: (np.repeat(g[:, None], cols, axis=1),), "row_sum")


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape)) != a.data.size:
        raise ShapeError(f"reshape: cannot view shape {a.shape} as {shape}")
    original = a.shape
    return Tensor.from_op(a.data.reshape(shape).copy(), (a,), lambda g: (g.reshape(original),), "reshape")


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got shape {a.shape}")
    return Tensor.from_op(a.data.T.copy(), (a,), lambda g: (g.T.copy(),), "transpose")


def slice_channels(a: Tensor, start: int, stop: int) -> Tensor:
    if a.ndim != 2 or not 0 <= start < stop <= a.shape[1]:
        raise ShapeError(f"slice_channels: invalid range [{start}, {stop}) for shape {a.shape}")
    shape = a.shape

    def backward_fn(g):
        full = np.zeros(shape)
        full[:, start:stop] = g
        return (full,)

    return Tensor.from_op(a.data[:, start:stop].copy(), (a,), backward_fn, "slice_channels")


def concat_channels(tensors: Sequence[Tensor]) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat_channels: nothing to concatenate")
    rows = {t.shape[0] for t in tensors if t.ndim == 2}
    if len(rows) != 1 or any(t.ndim != 2 for t in tensors):
        raise ShapeError(f"concat_channels: incompatible shapes {[t.shape for t in tensors]}")
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])

    def backward_fn(g):
        return [g[:, bounds[i]:bounds[i + 1]].copy() for i in range(len(tensors))]

    return Tensor.from_op(np.concatenate([t.data for t in tensors], axis=1), tensors, backward_fn, "concat_channels")


def log_softmax(a: Tensor) -> Tensor:
    """Normalized log-exponentials along the last axis of a matrix."""
    if a.ndim != 2:
        raise ShapeError(f"log_softmax: expected a matrix, got shape {a.shape}")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    probs = np.exp(out)

    def backward_fn(g):
        return (g - probs * g.sum(axis=1, keepdims=True),)

    return Tensor.from_op(out, (a,), backward_fn, "log_softmax")


def conv1d(x: Tensor, weight: Tensor, bias: Tensor = None) -> Tensor:
    """Convolution over the time axis with zero 'same' padding.

    x is (t, c_in), weight is (k, c_in, c_out) with odd k, bias is (c_out,).
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 2 or weight.ndim != 3 or weight.shape[1] != x.shape[1] or weight.shape[0] % 2 != 1:
        raise ShapeError(f"conv1d: incompatible shapes input {x.shape} and kernel {weight.shape}")
    if bias is not None and (bias.ndim != 1 or bias.shape[0] != weight.shape[2]):
        raise ShapeError(f"conv1d: bias shape {bias.shape} does not match kernel {weight.shape}")

    frames, c_in = x.shape
    k, _, c_out = weight.shape
    pad = k // 2
    padded = np.zeros((frames + 2 * pad, c_in))
    padded[pad:pad + frames] = x.data
    cols = np.concatenate([padded[j:j + frames] for j in range(k)], axis=1)
    kernel = weight.data.reshape(k * c_in, c_out)
    out = cols @ kernel
    if bias is not None:
        out = out + bias.data

    def backward_fn(g):
        grad_cols = g @ kernel.T
        grad_padded = np.zeros_like(padded)
        for j in range(k):
            grad_padded[j:j + frames] += grad_cols[:, j * c_in:(j + 1) * c_in]
        grads = [grad_padded[pad:pad + frames], (cols.T @ g).reshape(k, c_in, c_out)]
        if bias is not None:
            grads.append(g.sum(axis=0))
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward_fn, "conv1d")
