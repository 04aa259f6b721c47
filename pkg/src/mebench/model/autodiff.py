"""Minimal reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps a float64 ndarray plus a closure describing how to push
gradients to its parents; backward() walks the recorded graph in
reverse topological order. Only the operations the fusion model needs
are implemented, each with an exact analytic adjoint (the test suite
checks every one against central finite differences).
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_push", "name")

    def __init__(self, data, parents=(), push=None, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = tuple(parents)
        self._push = push
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, name={self.name})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self):
        """Accumulate gradients of self (seeded with ones) into the graph."""
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._push is not None and node.grad is not None:
                node._push(node.grad)


def _accum(t: Tensor, g: np.ndarray) -> None:
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g down to `shape`, inverting numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data, parents=(a, b))

    def push(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    out._push = push
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data, parents=(a, b))

    def push(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    out._push = push
    return out


def scale(a, k: float) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data * k, parents=(a,))
    out._push = lambda g: _accum(a, g * k)
    return out


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data @ b.data, parents=(a, b))

    def push(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        _accum(a, _unbroadcast(ga, a.shape))
        _accum(b, _unbroadcast(gb, b.shape))

    out._push = push
    return out


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape), parents=(a,))
    out._push = lambda g: _accum(a, g.reshape(a.shape))
    return out


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    inverse = np.argsort(axes)
    out = Tensor(a.data.transpose(axes), parents=(a,))
    out._push = lambda g: _accum(a, g.transpose(inverse))
    return out


def concat(parts, axis=-1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis), parents=tuple(parts))
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def push(g):
        for p, piece in zip(parts, np.split(g, splits, axis=axis)):
            _accum(p, piece)

    out._push = push
    return out


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    out = Tensor(np.where(mask, a.data, 0.0), parents=(a,))
    out._push = lambda g: _accum(a, g * mask)
    return out


def mean(a, axes=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.mean(axis=axes, keepdims=keepdims)
    out = Tensor(out_data, parents=(a,))
    count = a.data.size if axes is None else np.prod([a.data.shape[ax] for ax in np.atleast_1d(axes)])

    def push(g):
        if not keepdims and axes is not None:
            g = np.expand_dims(g, tuple(np.atleast_1d(axes)))
        _accum(a, np.broadcast_to(g, a.shape) / count)

    out._push = push
    return out


def softmax(a, axis=-1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y, parents=(a,))

    def push(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        _accum(a, y * (g - inner))

    out._push = push
    return out


def layer_norm(x, gamma, beta, eps: float = 1e-6) -> Tensor:
    """Normalize over the last axis with a learned affine."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    n = x.data.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered**2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = centered * inv_std
    out = Tensor(gamma.data * x_hat + beta.data, parents=(x, gamma, beta))

    def push(g):
        reduce_axes = tuple(range(g.ndim - 1))
        _accum(gamma, (g * x_hat).sum(axis=reduce_axes))
        _accum(beta, g.sum(axis=reduce_axes))
        g_hat = g * gamma.data
        gx = inv_std * (
            g_hat
            - g_hat.mean(axis=-1, keepdims=True)
            - x_hat * (g_hat * x_hat).mean(axis=-1, keepdims=True)
        )
        _accum(x, gx)

    out._push = push
    return out


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    batch, chans, h, w = x.shape
    out_h = (h - kh) // stride + 1
    out_w = (w - kw) // stride + 1
    cols = np.empty((batch, chans, kh, kw, out_h, out_w), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride]
    return cols.reshape(batch, chans * kh * kw, out_h * out_w), out_h, out_w


def _col2im(dcols: np.ndarray, x_shape, kh, kw, stride, pad, out_h, out_w):
    batch, chans, h, w = x_shape
    dx = np.zeros((batch, chans, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    d = dcols.reshape(batch, chans, kh, kw, out_h, out_w)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride] += d[:, :, i, j]
    if pad:
        dx = dx[:, :, pad:-pad, pad:-pad]
    return dx


def conv2d(x, w, b, stride: int = 1, pad: int = 0) -> Tensor:
    """x: (B, C, H, W); w: (F, C, kh, kw); b: (F,)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    filters, _, kh, kw = w.shape
    cols, out_h, out_w = _im2col(x.data, kh, kw, stride, pad)
    w_mat = w.data.reshape(filters, -1)
    out_data = (w_mat @ cols) + b.data[:, None]
    batch = x.data.shape[0]
    out = Tensor(out_data.reshape(batch, filters, out_h, out_w), parents=(x, w, b))

    def push(g):
        g_mat = g.reshape(batch, filters, out_h * out_w)
        _accum(b, g_mat.sum(axis=(0, 2)))
        _accum(w, np.einsum("bfl,bcl->fc", g_mat, cols).reshape(w.shape))
        dcols = np.einsum("fc,bfl->bcl", w_mat, g_mat)
        _accum(x, _col2im(dcols, x.data.shape, kh, kw, stride, pad, out_h, out_w))

    out._push = push
    return out


def linear(x, w, b) -> Tensor:
    """x: (..., D_in); w: (D_out, D_in); b: (D_out,)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    out = Tensor(x.data @ w.data.T + b.data, parents=(x, w, b))

    def push(g):
        _accum(x, g @ w.data)
        lead = int(np.prod(g.shape[:-1])) if g.ndim > 1 else 1
        g2 = g.reshape(lead, g.shape[-1])
        x2 = x.data.reshape(lead, x.data.shape[-1])
        _accum(w, g2.T @ x2)
        _accum(b, g2.sum(axis=0))

    out._push = push
    return out


def cross_entropy_mean(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean over the batch of -log softmax(logits)[target], stabilized."""
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    batch, n_classes = logits.data.shape
    if targets.min(initial=0) < 0 or targets.max(initial=0) >= n_classes:
        raise ValueError(f"target out of range for {n_classes} classes")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    picked = z[np.arange(batch), targets]
    out = Tensor(np.mean(lse - picked), parents=(logits,))

    def push(g):
        probs = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
        probs[np.arange(batch), targets] -= 1.0
        _accum(logits, g * probs / batch)

    out._push = push
    return out
