"""Named parameter collections, SGD with momentum and FedAvg averaging."""

from __future__ import annotations

import hashlib

import numpy as np

from ..errors import ConfigError, DomainError, ShapeError
from .autograd import Tensor


class ParamSet:
    """Ordered named parameters plus non-trainable buffers and SGD velocity.

    ``tensors`` maps names to trainable :class:`Tensor` leaves (their
    ``grad`` field is the gradient slot).  ``buffers`` holds batch-norm
    running statistics, which are averaged with the parameters but never
    receive gradients.  ``velocity`` is the momentum state of
    :func:`sgd_step`.
    """

    def __init__(self, tensors=None, buffers=None):
        self.tensors = dict(tensors or {})
        self.buffers = dict(buffers or {})
        self.velocity = {name: np.zeros_like(t.data) for name, t in self.tensors.items()}

    def __iter__(self):
        return iter(self.tensors.items())

    def __len__(self):
        return len(self.tensors)

    def __getitem__(self, name):
        return self.tensors[name]

    def names(self):
        return list(self.tensors)

    def grad(self, name):
        return self.tensors[name].grad

    def n_params(self):
        return sum(t.data.size for t in self.tensors.values())

    def zero_grad(self):
        for t in self.tensors.values():
            t.grad[...] = 0.0

    def copy(self):
        out = ParamSet(
            {n: Tensor(t.data.copy(), requires_grad=True) for n, t in self.tensors.items()},
            {n: b.copy() for n, b in self.buffers.items()},
        )
        out.velocity = {n: v.copy() for n, v in self.velocity.items()}
        return out

    def structure(self):
        return (
            tuple((n, t.data.shape) for n, t in self.tensors.items()),
            tuple((n, b.shape) for n, b in self.buffers.items()),
        )

    def flat(self):
        """All parameter values (then buffers) concatenated in order."""
        parts = [t.data.ravel() for t in self.tensors.values()]
        parts += [b.ravel() for b in self.buffers.values()]
        return np.concatenate(parts) if parts else np.zeros(0)

    def checksum(self):
        h = hashlib.sha256()
        for name, t in self.tensors.items():
            h.update(name.encode())
            h.update(t.data.tobytes())
        for name, b in self.buffers.items():
            h.update(name.encode())
            h.update(b.tobytes())
        return h.hexdigest()

    def equals(self, other):
        if self.structure() != other.structure():
            return False
        return all(np.array_equal(t.data, other.tensors[n].data) for n, t in self) and all(
            np.array_equal(b, other.buffers[n]) for n, b in self.buffers.items()
        )


def sgd_step(params, lr, momentum=0.0):
    """In-place update ``v <- momentum*v + grad; theta <- theta - lr*v``."""
    if not lr > 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    if not 0 <= momentum < 1:
        raise ConfigError(f"momentum must lie in [0, 1), got {momentum}")
    for name, t in params.tensors.items():
        v = params.velocity[name]
        v *= momentum
        v += t.grad
        t.data -= lr * v


def average_params(sets):
    """Elementwise arithmetic mean of structurally identical ParamSets.

    Buffers are averaged as well; the velocity of the result is zero.
    Summation runs in list order, so callers wanting order-independent
    output should pass a canonically ordered list.
    """
    sets = list(sets)
    if not sets:
        raise DomainError("average_params needs at least one ParamSet")
    ref = sets[0].structure()
    for i, s in enumerate(sets[1:], 1):
        if s.structure() != ref:
            raise ShapeError(f"ParamSet {i} does not match the structure of ParamSet 0")
    n = len(sets)
    tensors = {}
    for name in sets[0].tensors:
        acc = np.zeros_like(sets[0].tensors[name].data)
        for s in sets:
            acc += s.tensors[name].data
        tensors[name] = Tensor(acc / n, requires_grad=True)
    buffers = {}
    for name in sets[0].buffers:
        acc = np.zeros_like(sets[0].buffers[name])
        for s in sets:
            acc += s.buffers[name]
        buffers[name] = acc / n
    return ParamSet(tensors, buffers)


def save_params(params, path):
    arrays = {f"p:{n}": t.data for n, t in params}
    arrays.update({f"b:{n}": b for n, b in params.buffers.items()})
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_params(path):
    with np.load(path) as z:
        tensors = {k[2:]: Tensor(z[k].astype(np.float64), requires_grad=True) for k in z.files if k.startswith("p:")}
        buffers = {k[2:]: z[k].astype(np.float64) for k in z.files if k.startswith("b:")}
    return ParamSet(tensors, buffers)
