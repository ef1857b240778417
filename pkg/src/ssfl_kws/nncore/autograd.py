"""Small reverse-mode autodiff over float64 numpy arrays.

Only the op vocabulary needed by the temporal-convolution classifier is
provided: 1-D convolution, batch normalization, ReLU, addition, mean
pooling over frames, dense layers and the two cross-entropy losses.

Every op returns a :class:`Tensor` that remembers its parents and a
closure computing the vector-Jacobian product.  :func:`backward` walks the
recorded graph once in reverse topological order and accumulates into the
``grad`` of every leaf that requires it.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DomainError, ShapeError, StateError

DTYPE = np.float64


class Tensor:
    """A float64 array with an optional gradient slot and graph links."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad=False, _parents=(), _op=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents = _parents
        self._backward = None
        self._op = _op

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, scalar):
        return scale(self, scalar)

    __rmul__ = __mul__


def _node(data, parents, op, backward_fn):
    needs = any(p.requires_grad or p._op is not None for p in parents)
    out = Tensor(data, _parents=tuple(parents) if needs else (), _op=op)
    out._backward = backward_fn if needs else None
    return out


def _accum(t, g):
    """Route gradient ``g`` into the pending buffer of ``t``."""
    if t.requires_grad or t._op is not None:
        if t.grad is None:
            t.grad = g.copy()
        else:
            t.grad += g


def constant_loss(value=0.0):
    """A scalar loss node with no parameter dependence.

    Calling :func:`backward` on it is legal and leaves all grads untouched.
    """
    out = Tensor(value, _op="const")
    out._backward = None
    return out


def backward(loss):
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``.

    The graph is released afterwards; a second call on the same loss raises
    :class:`StateError`.
    """
    if loss._op is None:
        raise StateError("backward called on a tensor that was not produced by a forward pass")
    if loss._op == "consumed":
        raise StateError("backward already ran on this loss; run forward again")
    if loss.data.size != 1:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.shape}")

    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p._op is not None and id(p) not in seen:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
        # interior buffers are not needed once propagated
        node.grad = None
        node._parents = ()
        node._backward = None
        node._op = "consumed"


def add(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"add: shape {a.shape} vs {b.shape}")

    def bw(g):
        _accum(a, g)
        _accum(b, g)

    return _node(a.data + b.data, (a, b), "add", bw)


def scale(a, c):
    c = float(c)

    def bw(g):
        _accum(a, g * c)

    return _node(a.data * c, (a,), "scale", bw)


def relu(a):
    mask = a.data > 0

    def bw(g):
        _accum(a, g * mask)

    return _node(a.data * mask, (a,), "relu", bw)


def conv1d(x, w, b=None, stride=1):
    """Temporal convolution with 'same'-style zero padding of ``K // 2``.

    x: (B, C_in, T), w: (C_out, C_in, K), b: (C_out,) or None.
    Output length is ``(T + 2*(K//2) - K) // stride + 1``.
    """
    B, C_in, T = x.shape
    C_out, C_in_w, K = w.shape
    if C_in != C_in_w:
        raise ShapeError(f"conv1d: input has {C_in} channels, weight expects {C_in_w}")
    pad = K // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad)))
    t_out = (T + 2 * pad - K) // stride + 1
    # (B, C_in, t_out, K)
    cols = sliding_window_view(xp, K, axis=2)[:, :, ::stride, :][:, :, :t_out, :]
    # (B, t_out, C_in*K)
    cols2 = np.ascontiguousarray(cols.transpose(0, 2, 1, 3)).reshape(B, t_out, C_in * K)
    w2 = w.data.reshape(C_out, C_in * K)
    out = (cols2 @ w2.T).transpose(0, 2, 1)
    if b is not None:
        out = out + b.data[None, :, None]
    parents = (x, w) if b is None else (x, w, b)

    def bw(g):
        # g: (B, C_out, t_out)
        gt = g.transpose(0, 2, 1)  # (B, t_out, C_out)
        if w.requires_grad or w._op is not None:
            gw = np.tensordot(gt, cols2, axes=([0, 1], [0, 1]))
            _accum(w, gw.reshape(w.shape))
        if b is not None:
            _accum(b, g.sum(axis=(0, 2)))
        if x.requires_grad or x._op is not None:
            gcols = (gt @ w2).reshape(B, t_out, C_in, K)
            gxp = np.zeros_like(xp)
            span = stride * (t_out - 1) + 1
            for k in range(K):
                gxp[:, :, k:k + span:stride] += gcols[:, :, :, k].transpose(0, 2, 1)
            _accum(x, gxp[:, :, pad:pad + T])

    return _node(out, parents, "conv1d", bw)


def batch_norm(x, gamma, beta, running_mean, running_var, train, momentum=0.1, eps=1e-5):
    """Per-channel normalization over (batch, frames) for x of shape (B, C, T).

    In training mode batch statistics are used and ``running_mean`` /
    ``running_var`` (plain arrays) are updated in place with the unbiased
    variance; in eval mode the running statistics are used.
    """
    if train:
        n = x.shape[0] * x.shape[2]
        mu = x.data.mean(axis=(0, 2))
        var = x.data.var(axis=(0, 2))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        unbiased = var * n / (n - 1) if n > 1 else var
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    else:
        mu = running_mean.copy()
        var = running_var.copy()
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[None, :, None]) * inv_std[None, :, None]
    out = gamma.data[None, :, None] * xhat + beta.data[None, :, None]

    def bw(g):
        _accum(gamma, (g * xhat).sum(axis=(0, 2)))
        _accum(beta, g.sum(axis=(0, 2)))
        if x.requires_grad or x._op is not None:
            gxhat = g * gamma.data[None, :, None]
            if train:
                n = x.shape[0] * x.shape[2]
                s1 = gxhat.sum(axis=(0, 2), keepdims=True)
                s2 = (gxhat * xhat).sum(axis=(0, 2), keepdims=True)
                gx = (inv_std[None, :, None] / n) * (n * gxhat - s1 - xhat * s2)
            else:
                gx = gxhat * inv_std[None, :, None]
            _accum(x, gx)

    return _node(out, (x, gamma, beta), "batch_norm", bw)


def mean_frames(x):
    """Global average pool over the last (frame) axis: (B, C, T) -> (B, C)."""
    T = x.shape[2]

    def bw(g):
        _accum(x, np.repeat(g[:, :, None] / T, T, axis=2))

    return _node(x.data.mean(axis=2), (x,), "mean_frames", bw)


def linear(x, w, b):
    """Dense layer: x (B, D_in), w (D_out, D_in), b (D_out,)."""
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"linear: input dim {x.shape[1]} vs weight {w.shape[1]}")

    def bw(g):
        _accum(w, g.T @ x.data)
        _accum(b, g.sum(axis=0))
        _accum(x, g @ w.data)

    return _node(x.data @ w.data.T + b.data, (x, w, b), "linear", bw)


def log_softmax(z):
    z = np.asarray(z, dtype=DTYPE)
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(z):
    return np.exp(log_softmax(z))


def cross_entropy(logits, labels):
    """Mean over the batch of -log softmax(logits)[label]."""
    labels = np.asarray(labels, dtype=np.int64)
    B, C = logits.shape
    if labels.shape != (B,):
        raise ShapeError(f"cross_entropy: {B} logit rows but {labels.shape} labels")
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise DomainError(f"cross_entropy: labels must lie in [0, {C}), got {labels.tolist()}")
    target = np.zeros((B, C))
    target[np.arange(B), labels] = 1.0
    return soft_cross_entropy(logits, target)


def soft_cross_entropy(logits, target):
    """Mean over the batch of -sum(target * log softmax(logits))."""
    target = np.asarray(target, dtype=DTYPE)
    if target.shape != logits.shape:
        raise ShapeError(f"soft_cross_entropy: target {target.shape} vs logits {logits.shape}")
    B = logits.shape[0]
    logp = log_softmax(logits.data)
    loss = -(target * logp).sum() / B

    def bw(g):
        p = np.exp(logp)
        _accum(logits, g * (p * target.sum(axis=1, keepdims=True) - target) / B)

    return _node(np.array(loss), (logits,), "cross_entropy", bw)
