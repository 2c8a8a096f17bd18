"""Reverse-mode automatic differentiation on float64 numpy buffers.

Every operation records a backward closure on the produced tensor; calling
:func:`backward` on a scalar loss topologically sorts the tape and accumulates
gradients into ``.grad``. Segment operations (max / mean / softmax) implement
the aggregation semantics the message-passing blocks rely on: empty segments
produce zero rows, and the max gradient routes to the first maximal element.
"""
from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 parents: tuple = (), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'yes' if self.requires_grad else 'no'})"

    # operator sugar used mainly by tests and the losses
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __sub__(self, other):
        return add(self, mul(_as_tensor(other), _as_tensor(-1.0)))

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _needs_grad(*tensors: Tensor) -> bool:
    return any(t.requires_grad for t in tensors)


def _accumulate(t: Tensor, grad: np.ndarray) -> None:
    if not t.requires_grad and t._backward is None:
        return  # constant leaf: nothing upstream consumes this gradient
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += grad


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor on the tape."""
    if loss.data.size != 1:
        raise ValueError("backward() expects a scalar loss")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# -- arithmetic ---------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data, parents=(a, b))

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    out._backward = bw
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data, parents=(a, b))

    def bw(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    out._backward = bw
    return out


def power(a: Tensor, exponent: float) -> Tensor:
    out = Tensor(a.data ** exponent, parents=(a,))

    def bw(g):
        _accumulate(a, g * exponent * a.data ** (exponent - 1))

    out._backward = bw
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data @ b.data, parents=(a, b))

    def bw(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    out._backward = bw
    return out


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b."""
    return add(matmul(x, w), b)


def tsum(a: Tensor) -> Tensor:
    out = Tensor(a.data.sum(), parents=(a,))

    def bw(g):
        _accumulate(a, np.full_like(a.data, float(g)))

    out._backward = bw
    return out


def tmean(a: Tensor) -> Tensor:
    n = a.data.size
    out = Tensor(a.data.mean(), parents=(a,))

    def bw(g):
        _accumulate(a, np.full_like(a.data, float(g) / n))

    out._backward = bw
    return out


# -- activations --------------------------------------------------------------------


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0), parents=(a,))

    def bw(g):
        _accumulate(a, g * (a.data > 0))

    out._backward = bw
    return out


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    out = Tensor(np.where(a.data >= 0, a.data, slope * a.data), parents=(a,))

    def bw(g):
        _accumulate(a, g * np.where(a.data >= 0, 1.0, slope))

    out._backward = bw
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)
    out = Tensor(s, parents=(a,))

    def bw(g):
        _accumulate(a, g * s * (1.0 - s))

    out._backward = bw
    return out


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def dropout(a: Tensor, rate: float, rng: np.random.Generator,
            training: bool) -> Tensor:
    """Inverted dropout: surviving activations scale by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    mask = (rng.random(a.data.shape) >= rate) / (1.0 - rate)
    out = Tensor(a.data * mask, parents=(a,))

    def bw(g):
        _accumulate(a, g * mask)

    out._backward = bw
    return out


# -- structure ----------------------------------------------------------------------


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis),
                 parents=tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            _accumulate(t, piece)

    out._backward = bw
    return out


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape), parents=(a,))

    def bw(g):
        _accumulate(a, g.reshape(a.data.shape))

    out._backward = bw
    return out


def gather(a: Tensor, index: np.ndarray) -> Tensor:
    """Select rows: out = a[index]."""
    index = np.asarray(index, dtype=np.int64)
    out = Tensor(a.data[index], parents=(a,))

    def bw(g):
        da = np.zeros_like(a.data)
        np.add.at(da, index, g)
        _accumulate(a, da)

    out._backward = bw
    return out


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor,
               running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1,
               eps: float = 1e-5) -> Tensor:
    """Feature-wise batch normalization over axis 0.

    Training mode normalizes by batch statistics (biased variance) and updates
    the running buffers in place; eval mode uses the buffers, making the output
    an affine per-feature map independent of the batch.
    """
    if training and x.data.shape[0] > 0:
        mu = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        running_mean *= (1.0 - momentum)
        running_mean += momentum * mu
        running_var *= (1.0 - momentum)
        running_var += momentum * var
    else:
        mu = running_mean.copy()
        var = running_var.copy()
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = Tensor(gamma.data * xhat + beta.data, parents=(x, gamma, beta))
    use_batch_stats = training and x.data.shape[0] > 0
    n = max(x.data.shape[0], 1)

    def bw(g):
        _accumulate(gamma, (g * xhat).sum(axis=0))
        _accumulate(beta, g.sum(axis=0))
        if use_batch_stats:
            gg = g * gamma.data
            dx = inv_std * (gg - gg.mean(axis=0) - xhat * (gg * xhat).mean(axis=0))
            _accumulate(x, dx)
        else:
            _accumulate(x, g * gamma.data * inv_std)

    out._backward = bw
    _ = n
    return out


# -- segment operations -------------------------------------------------------------


def _segment_slices(segment_ids: np.ndarray, num_segments: int):
    order = np.argsort(segment_ids, kind="stable")
    sorted_ids = segment_ids[order]
    starts = np.searchsorted(sorted_ids, np.arange(num_segments), side="left")
    ends = np.searchsorted(sorted_ids, np.arange(num_segments), side="right")
    return order, starts, ends


def segment_max(a: Tensor, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Per-segment column-wise max; empty segments yield zero rows.

    The gradient flows to the first maximal element of each segment/column
    (ties broken by row order).
    """
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    n_col = a.data.shape[1]
    out_data = np.zeros((num_segments, n_col))
    arg_rows = np.full((num_segments, n_col), -1, dtype=np.int64)
    order, starts, ends = _segment_slices(segment_ids, num_segments)
    for s in range(num_segments):
        rows = order[starts[s]:ends[s]]
        if rows.size == 0:
            continue
        block = a.data[rows]
        out_data[s] = block.max(axis=0)
        arg_rows[s] = rows[np.argmax(block, axis=0)]
    out = Tensor(out_data, parents=(a,))

    def bw(g):
        da = np.zeros_like(a.data)
        valid = arg_rows >= 0
        segs, cols = np.nonzero(valid)
        np.add.at(da, (arg_rows[segs, cols], cols), g[segs, cols])
        _accumulate(a, da)

    out._backward = bw
    return out


def segment_mean(a: Tensor, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Per-segment column-wise mean; empty segments yield zero rows."""
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    counts = np.bincount(segment_ids, minlength=num_segments).astype(np.float64)
    sums = np.zeros((num_segments, a.data.shape[1]))
    np.add.at(sums, segment_ids, a.data)
    denom = np.maximum(counts, 1.0)[:, None]
    out = Tensor(sums / denom, parents=(a,))

    def bw(g):
        _accumulate(a, g[segment_ids] / denom[segment_ids])

    out._backward = bw
    return out


def segment_softmax(a: Tensor, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Column-wise softmax within each segment (numerically stabilized by the
    per-segment max). Rows of a singleton segment come out exactly 1."""
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    seg_max = np.full((num_segments, a.data.shape[1]), -np.inf)
    np.maximum.at(seg_max, segment_ids, a.data)
    shifted = a.data - seg_max[segment_ids]
    ex = np.exp(shifted)
    seg_sum = np.zeros((num_segments, a.data.shape[1]))
    np.add.at(seg_sum, segment_ids, ex)
    y = ex / seg_sum[segment_ids]
    out = Tensor(y, parents=(a,))

    def bw(g):
        gy = g * y
        seg_dot = np.zeros((num_segments, a.data.shape[1]))
        np.add.at(seg_dot, segment_ids, gy)
        _accumulate(a, gy - y * seg_dot[segment_ids])

    out._backward = bw
    return out


# -- losses -------------------------------------------------------------------------


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy on raw logits (log-sum-exp stabilized)."""
    t = np.asarray(targets, dtype=np.float64)
    z = logits.data
    loss = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))
    out = Tensor(loss.mean(), parents=(logits,))
    n = z.size

    def bw(g):
        _accumulate(logits, float(g) * (_sigmoid(z) - t) / n)

    out._backward = bw
    return out


def mse(pred: Tensor, targets: np.ndarray) -> Tensor:
    t = np.asarray(targets, dtype=np.float64)
    diff = pred.data - t
    out = Tensor((diff ** 2).mean(), parents=(pred,))
    n = diff.size

    def bw(g):
        _accumulate(pred, float(g) * 2.0 * diff / n)

    out._backward = bw
    return out
