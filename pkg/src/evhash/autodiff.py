"""Minimal reverse-mode differentiation on numpy arrays.

This is not a general autograd: it supports exactly the operations the
recurrent autoencoder and its losses need. Graphs are built eagerly by
the ops below; ``backward`` walks the tape iteratively (no recursion) and
accumulates gradients into leaves.

Gradients of ``matmul`` with respect to a :class:`Leaf` weight are not
formed per call. The (input, upstream) pair is parked on the leaf and all
pairs are contracted in one stacked GEMM when the backward pass finishes;
for a recurrent weight applied at hundreds of timesteps this is the
difference between one large matrix product and hundreds of small
accumulations.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


class Tensor:
    """A node of the tape: an array value plus backward bookkeeping."""

    __slots__ = ("value", "grad", "_parents", "_bwd")

    def __init__(self, value, parents=(), bwd=None):
        self.value = value
        self.grad = None
        self._parents = parents
        self._bwd = bwd

    @property
    def shape(self):
        return self.value.shape

    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable leaf's grad."""
        if self.value.ndim != 0:
            raise ValueError("backward() expects a scalar loss")
        topo = _toposort(self)
        self.grad = np.ones_like(self.value)
        leaves = []
        for node in reversed(topo):
            if isinstance(node, Leaf):
                leaves.append(node)
                continue
            if node._bwd is None:
                continue  # source tensor: keep any accumulated grad
            if node.grad is not None:
                node._bwd(node.grad)
                node.grad = None  # free intermediate grads as we go
        for leaf in leaves:
            leaf.flush_pending()


class Leaf(Tensor):
    """A trainable tensor. Its grad persists across backward passes."""

    __slots__ = ("_pending",)

    def __init__(self, value):
        super().__init__(np.asarray(value))
        self.grad = np.zeros_like(self.value)
        self._pending = []

    def flush_pending(self):
        if not self._pending:
            return
        if len(self._pending) == 1:
            x, g = self._pending[0]
            self.grad += x.T @ g
        else:
            xs = np.concatenate([x for x, _ in self._pending], axis=0)
            gs = np.concatenate([g for _, g in self._pending], axis=0)
            self.grad += xs.T @ gs
        self._pending.clear()


def _toposort(root):
    topo = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return topo


def _buf(t):
    if t.grad is None:
        t.grad = np.zeros_like(t.value)
    return t.grad


def is_tensor(x):
    return isinstance(x, Tensor)


def val(x):
    """Underlying ndarray of ``x`` whether or not it is on the tape."""
    return x.value if isinstance(x, Tensor) else x


def constant(x):
    return np.asarray(x)


# -- arithmetic ---------------------------------------------------------
#
# Every op accepts Tensor or ndarray operands. With no Tensor among them
# it reduces to plain numpy, which is the inference fast path.


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b):
    ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)
    if not (ta or tb):
        return a + b
    av, bv = val(a), val(b)
    out_v = av + bv

    def bwd(g):
        if ta:
            _buf(a)[...] += _unbroadcast(g, av.shape)
        if tb:
            _buf(b)[...] += _unbroadcast(g, bv.shape)

    return Tensor(out_v, tuple(x for x in (a, b) if isinstance(x, Tensor)), bwd)


def addn(tensors):
    """Sum of many same-shape terms as a single node."""
    live = [t for t in tensors if isinstance(t, Tensor)]
    total = sum(val(t) for t in tensors)
    if not live:
        return total

    def bwd(g):
        for t in live:
            _buf(t)[...] += g

    return Tensor(np.asarray(total), tuple(live), bwd)


def sub(a, b):
    ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)
    if not (ta or tb):
        return a - b
    av, bv = val(a), val(b)
    out_v = av - bv

    def bwd(g):
        if ta:
            _buf(a)[...] += _unbroadcast(g, av.shape)
        if tb:
            _buf(b)[...] -= _unbroadcast(g, bv.shape)

    return Tensor(out_v, tuple(x for x in (a, b) if isinstance(x, Tensor)), bwd)


def mul(a, b):
    ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)
    if not (ta or tb):
        return a * b
    av, bv = val(a), val(b)
    out_v = av * bv

    def bwd(g):
        if ta:
            _buf(a)[...] += _unbroadcast(g * bv, av.shape)
        if tb:
            _buf(b)[...] += _unbroadcast(g * av, bv.shape)

    return Tensor(out_v, tuple(x for x in (a, b) if isinstance(x, Tensor)), bwd)


def scale(a, c):
    """a * c for a python/numpy constant c."""
    if not isinstance(a, Tensor):
        return a * c

    def bwd(g):
        _buf(a)[...] += g * c

    return Tensor(a.value * c, (a,), bwd)


def square(a):
    if not isinstance(a, Tensor):
        return a * a
    av = a.value

    def bwd(g):
        _buf(a)[...] += 2.0 * av * g

    return Tensor(av * av, (a,), bwd)


def matmul(a, b):
    """a @ b for 2-D operands; dW for Leaf weights is deferred."""
    ta, tb = isinstance(a, Tensor), isinstance(b, Tensor)
    if not (ta or tb):
        return a @ b
    av, bv = val(a), val(b)
    out_v = av @ bv

    def bwd(g):
        if ta:
            _buf(a)[...] += g @ bv.T
        if tb:
            if isinstance(b, Leaf):
                b._pending.append((av, g))
            else:
                _buf(b)[...] += av.T @ g

    return Tensor(out_v, tuple(x for x in (a, b) if isinstance(x, Tensor)), bwd)


def gram(a):
    """a @ a.T as one node (pairwise inner products of rows)."""
    if not isinstance(a, Tensor):
        return a @ a.T
    av = a.value

    def bwd(g):
        _buf(a)[...] += (g + g.T) @ av

    return Tensor(av @ av.T, (a,), bwd)


# -- nonlinearities -----------------------------------------------------


def sigmoid(a):
    av = val(a)
    s = expit(av)
    if not isinstance(a, Tensor):
        return s

    def bwd(g):
        _buf(a)[...] += g * s * (1.0 - s)

    return Tensor(s, (a,), bwd)


def tanh(a):
    av = val(a)
    t = np.tanh(av)
    if not isinstance(a, Tensor):
        return t

    def bwd(g):
        _buf(a)[...] += g * (1.0 - t * t)

    return Tensor(t, (a,), bwd)


def arctanh_clamped(a, margin=1e-6):
    """arctanh with inputs clipped to [-1+margin, 1-margin].

    Clipping keeps the output finite; it never flips a sign. Clamped
    entries get zero gradient (the local function is constant there).
    """
    av = val(a)
    lo, hi = -1.0 + margin, 1.0 - margin
    clipped = np.clip(av, lo, hi)
    out_v = np.arctanh(clipped)
    if not isinstance(a, Tensor):
        return out_v
    inside = (av > lo) & (av < hi)
    deriv = np.where(inside, 1.0 / (1.0 - clipped * clipped), 0.0)

    def bwd(g):
        _buf(a)[...] += g * deriv

    return Tensor(out_v, (a,), bwd)


# -- reductions ---------------------------------------------------------


def sum_all(a):
    if not isinstance(a, Tensor):
        return np.asarray(a).sum()
    av = a.value

    def bwd(g):
        _buf(a)[...] += g

    return Tensor(np.asarray(av.sum()), (a,), bwd)


def wsum(a, w):
    """Scalar sum(a * w) for a constant weight array w (broadcastable)."""
    av = val(a)
    out_v = np.asarray((av * w).sum())
    if not isinstance(a, Tensor):
        return out_v

    def bwd(g):
        _buf(a)[...] += g * np.broadcast_to(w, av.shape)

    return Tensor(out_v, (a,), bwd)


def rowsum(a):
    """Sum over the last axis: (B, d) -> (B,)."""
    av = val(a)
    out_v = av.sum(axis=-1)
    if not isinstance(a, Tensor):
        return out_v

    def bwd(g):
        _buf(a)[...] += g[..., None]

    return Tensor(out_v, (a,), bwd)


# -- row plumbing (ragged batches) --------------------------------------


def broadcast_rows(v, n):
    """Tile a d-vector into an (n, d) matrix."""
    vv = val(v)
    out_v = np.repeat(vv[None, :], n, axis=0)
    if not isinstance(v, Tensor):
        return out_v

    def bwd(g):
        _buf(v)[...] += g.sum(axis=0)

    return Tensor(out_v, (v,), bwd)


def slice_rows(a, start, stop):
    av = val(a)
    out_v = av[start:stop]
    if not isinstance(a, Tensor):
        return out_v

    def bwd(g):
        _buf(a)[start:stop] += g

    return Tensor(out_v, (a,), bwd)


def slice_cols(a, start, stop):
    av = val(a)
    out_v = av[:, start:stop]
    if not isinstance(a, Tensor):
        return out_v

    def bwd(g):
        _buf(a)[:, start:stop] += g

    return Tensor(out_v, (a,), bwd)


def rowcat(parts):
    """Concatenate row slices [(tensor_or_array, start, stop), ...]."""
    out_v = np.concatenate([val(a)[s:e] for a, s, e in parts], axis=0)
    live = [(a, s, e) for a, s, e in parts if isinstance(a, Tensor)]
    if not live:
        return out_v
    offsets = []
    pos = 0
    for a, s, e in parts:
        n = e - s
        if isinstance(a, Tensor):
            offsets.append((a, s, pos, pos + n))
        pos += n

    def bwd(g):
        for a, s, o0, o1 in offsets:
            _buf(a)[s:s + (o1 - o0)] += g[o0:o1]

    return Tensor(out_v, tuple(a for a, _, _, _ in offsets), bwd)
