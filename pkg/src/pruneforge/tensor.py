"""Minimal dense-tensor engine with reverse-mode differentiation.

Every operation keeps a record of its input tensors and a backward rule on
the output tensor; calling :func:`backward` replays those rules in exact
reverse execution order (a topological walk of the recorded graph) and
accumulates gradients additively into the leaves.

Values are float32 by default; pass float64 arrays to run the whole graph
in 64-bit mode, which is what the finite-difference gradient checks use.
All operations are pure functions of their inputs: same inputs, same bits.
"""

from __future__ import annotations

import numpy as np


class ShapeMismatchError(ValueError):
    """Operand shapes do not agree with the operation's contract."""


class NonFiniteError(FloatingPointError):
    """An operation produced (or consumed) NaN or Inf values."""


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{op} produced non-finite values")


class Tensor:
    """A numpy array plus the bookkeeping needed for backpropagation.

    ``data`` is row-major float32 or float64. ``grad`` is filled in by
    :func:`backward` for tensors created with ``requires_grad=True`` and for
    every intermediate on the path to one.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    _check_finite(data, op)
    out = Tensor(data, dtype=data.dtype)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def backward(root: Tensor) -> None:
    """Run reverse-mode accumulation from a scalar tensor.

    Visits recorded operations in exact reverse execution order; gradients
    accumulate additively, so leaves reached along several paths sum their
    contributions.
    """
    if root.data.size != 1:
        raise ShapeMismatchError("backward expects a scalar root")
    # Iterative topological sort; recursion would overflow on long epochs.
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    root.grad = np.ones_like(root.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# convolution

def _im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """[b,ci,h,w] -> [b, ci*kh*kw, h*w] patches under zero 'same' padding."""
    b, ci, h, w = x.shape
    ph, pw = kh // 2, kw // 2
    padded = np.zeros((b, ci, h + 2 * ph, w + 2 * pw), dtype=x.dtype)
    padded[:, :, ph:ph + h, pw:pw + w] = x
    cols = np.empty((b, ci, kh * kw, h, w), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i * kw + j] = padded[:, :, i:i + h, j:j + w]
    return cols.reshape(b, ci * kh * kw, h * w)


def _col2im(cols: np.ndarray, shape: tuple[int, ...], kh: int, kw: int) -> np.ndarray:
    """Adjoint of :func:`_im2col`: scatter-add patches back onto the image."""
    b, ci, h, w = shape
    ph, pw = kh // 2, kw // 2
    padded = np.zeros((b, ci, h + 2 * ph, w + 2 * pw), dtype=cols.dtype)
    cols = cols.reshape(b, ci, kh * kw, h, w)
    for i in range(kh):
        for j in range(kw):
            padded[:, :, i:i + h, j:j + w] += cols[:, :, i * kw + j]
    return padded[:, :, ph:ph + h, pw:pw + w]


def conv2d_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Cross-correlation with zero 'same' padding, stride 1, bias per channel."""
    if x.ndim != 4 or kernels.ndim != 4:
        raise ShapeMismatchError("conv2d expects input [b,ci,h,w] and kernels [co,ci,kh,kw]")
    b, ci, h, w = x.shape
    co, cik, kh, kw = kernels.shape
    if cik != ci:
        raise ShapeMismatchError(f"conv2d: input has {ci} channels, kernels expect {cik}")
    if bias.shape != (co,):
        raise ShapeMismatchError(f"conv2d: bias shape {bias.shape} != ({co},)")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeMismatchError("conv2d: kernel extents must be odd for 'same' padding")
    cols = _im2col(x, kh, kw)
    kmat = kernels.reshape(co, ci * kh * kw)
    out = np.matmul(kmat[None, :, :], cols)          # [b, co, h*w]
    out += bias[None, :, None]
    return out.reshape(b, co, h, w)


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    out = conv2d_forward(x.data, kernels.data, bias.data)
    b, ci, h, w = x.shape
    co, _, kh, kw = kernels.shape

    def bwd(g: np.ndarray) -> None:
        gmat = g.reshape(b, co, h * w)
        if kernels.requires_grad:
            cols = _im2col(x.data, kh, kw)
            dk = np.einsum("bij,bkj->ik", gmat, cols)
            kernels._accumulate(dk.reshape(kernels.data.shape))
        if bias.requires_grad:
            bias._accumulate(gmat.sum(axis=(0, 2)))
        if x.requires_grad:
            kmat = kernels.data.reshape(co, ci * kh * kw)
            dcols = np.matmul(kmat.T[None, :, :], gmat)
            x._accumulate(_col2im(dcols, x.data.shape, kh, kw))

    return _result(out, (x, kernels, bias), bwd, "conv2d")


# ---------------------------------------------------------------------------
# elementwise / pooling / dense

def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            # gradient is zero at exactly 0: strict inequality
            x._accumulate(g * (x.data > 0))

    return _result(out, (x,), bwd, "relu")


def maxpool2d_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2/stride-2 max pooling; returns (pooled, argmax index in each window).

    Odd trailing rows/columns are dropped (floor semantics). Window values
    are scanned row-major, so ties resolve to the first occurrence.
    """
    b, c, h, w = x.shape
    if h < 2 or w < 2:
        raise ShapeMismatchError(f"maxpool2d needs h,w >= 2, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    win = x[:, :, :h2 * 2, :w2 * 2].reshape(b, c, h2, 2, w2, 2)
    win = win.transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h2, w2, 4)
    idx = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool2d(x: Tensor) -> Tensor:
    out, idx = maxpool2d_forward(x.data)
    b, c, h, w = x.shape
    h2, w2 = h // 2, w // 2

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            scat = np.zeros((b, c, h2, w2, 4), dtype=g.dtype)
            np.put_along_axis(scat, idx[..., None], g[..., None], axis=-1)
            scat = scat.reshape(b, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
            dx = np.zeros_like(x.data)
            dx[:, :, :h2 * 2, :w2 * 2] = scat.reshape(b, c, h2 * 2, w2 * 2)
            x._accumulate(dx)

    return _result(out, (x,), bwd, "maxpool2d")


def dense_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or weights.ndim != 2:
        raise ShapeMismatchError("dense expects input [b,n] and weights [m,n]")
    if x.shape[1] != weights.shape[1]:
        raise ShapeMismatchError(f"dense: input width {x.shape[1]} != weight width {weights.shape[1]}")
    if bias.shape != (weights.shape[0],):
        raise ShapeMismatchError(f"dense: bias shape {bias.shape} != ({weights.shape[0]},)")
    return x @ weights.T + bias[None, :]


def dense(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    out = dense_forward(x.data, weights.data, bias.data)

    def bwd(g: np.ndarray) -> None:
        if weights.requires_grad:
            weights._accumulate(g.T @ x.data)
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=0))
        if x.requires_grad:
            x._accumulate(g @ weights.data)

    return _result(out, (x, weights, bias), bwd, "dense")


def flatten(x: Tensor) -> Tensor:
    """[b,c,h,w] -> [b, c*h*w] in channel-major (channel, row, column) order."""
    b = x.shape[0]
    out = x.data.reshape(b, -1)

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g.reshape(x.data.shape))

    return _result(out, (x,), bwd, "flatten")


# ---------------------------------------------------------------------------
# losses and reductions

def softmax_cross_entropy_forward(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over the batch of -log softmax(logits)[label]; returns (loss, probs)."""
    if logits.ndim != 2:
        raise ShapeMismatchError("softmax_cross_entropy expects logits [b,c]")
    b, c = logits.shape
    if c < 2:
        raise ShapeMismatchError("softmax_cross_entropy needs at least 2 classes")
    labels = np.asarray(labels)
    if labels.shape != (b,):
        raise ShapeMismatchError(f"labels shape {labels.shape} != ({b},)")
    if labels.min() < 0 or labels.max() >= c:
        raise ShapeMismatchError(f"label out of range [0, {c})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    probs = exps / exps.sum(axis=1, keepdims=True)
    logprob = shifted - np.log(exps.sum(axis=1, keepdims=True))
    loss = -float(logprob[np.arange(b), labels].mean())
    return loss, probs


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    labels = np.asarray(labels)
    loss, probs = softmax_cross_entropy_forward(logits.data, labels)
    b = logits.shape[0]

    def bwd(g: np.ndarray) -> None:
        if logits.requires_grad:
            d = probs.astype(logits.data.dtype, copy=True)
            d[np.arange(b), labels] -= 1
            d /= b
            logits._accumulate(d * g)

    return _result(np.asarray(loss, dtype=logits.data.dtype), (logits,), bwd, "softmax_cross_entropy")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"sub: shapes {a.shape} and {b.shape} differ")
    out = a.data - b.data

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(-g)

    return _result(out, (a, b), bwd, "sub")


def square(x: Tensor) -> Tensor:
    out = x.data * x.data

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(2 * x.data * g)

    return _result(out, (x,), bwd, "square")


def sum_per_sample(x: Tensor) -> Tensor:
    """Sum over every axis except the leading batch axis: [b, ...] -> [b]."""
    axes = tuple(range(1, x.data.ndim))
    out = x.data.sum(axis=axes)

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            shape = (x.shape[0],) + (1,) * (x.data.ndim - 1)
            x._accumulate(np.broadcast_to(g.reshape(shape), x.data.shape).copy())

    return _result(out, (x,), bwd, "sum_per_sample")


def sqrt(x: Tensor) -> Tensor:
    if np.any(x.data < 0):
        raise NonFiniteError("sqrt of negative value")
    out = np.sqrt(x.data)

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            # convention: zero gradient where the input is exactly 0, so a
            # vanished reconstruction distance yields a zero (not NaN) update
            d = np.zeros_like(x.data)
            nz = x.data > 0
            d[nz] = g[nz] / (2 * out[nz])
            x._accumulate(d)

    return _result(out, (x,), bwd, "sqrt")


def mean(x: Tensor) -> Tensor:
    out = np.asarray(x.data.mean(), dtype=x.data.dtype)
    n = x.data.size

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(np.full_like(x.data, g / n))

    return _result(out, (x,), bwd, "mean")


# ---------------------------------------------------------------------------
# optimizer

def sgd_step(params: list[np.ndarray], grads: list[np.ndarray], learning_rate: float) -> list[np.ndarray]:
    """Plain stochastic gradient descent: p <- p - lr * g, returned as new arrays."""
    if learning_rate < 0:
        raise ValueError("learning_rate must be >= 0")
    if len(params) != len(grads):
        raise ShapeMismatchError("params and grads differ in length")
    updated = []
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeMismatchError(f"sgd_step: param {p.shape} vs grad {g.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("sgd_step received a non-finite gradient")
        updated.append(p - learning_rate * g.astype(p.dtype, copy=False))
    return updated
