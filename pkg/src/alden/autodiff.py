"""Dense-tensor reverse-mode automatic differentiation.

A :class:`Tensor` wraps a float64 numpy array.  Primitives executed while a
:class:`Tape` is active record their backward rules on that tape; calling
``tape.backward(scalar)`` then fills ``.grad`` on every tensor that was
touched by a recorded operation.  With no tape active the primitives are
plain numpy computations, which is the evaluation fast path.

The design is deliberately small:

* float64 everywhere, so fine-grained distance comparisons downstream are
  not perturbed by single-precision noise;
* no broadcasting except adding a bias vector along the last axis;
* dropout is mask application only, the mask is supplied by the caller so
  all stochasticity stays outside this module;
* the ReLU derivative at exactly 0 is taken to be 0.

Batched model forwards lean on a handful of shape primitives (``windows``,
``reshape``, ``concat``) so a whole minibatch becomes a few large matmuls
instead of many small ones.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np


class AutodiffError(Exception):
    """Base class for errors raised by this module."""


class ShapeMismatch(AutodiffError):
    """Inputs to a primitive have incompatible shapes."""

    def __init__(self, primitive: str, *shapes):
        super().__init__(f"{primitive}: incompatible shapes {[tuple(s) for s in shapes]}")


class BackwardError(AutodiffError):
    """Backward was requested in an invalid state."""


class Tensor:
    """A float64 array plus gradient bookkeeping.

    ``requires_grad`` marks leaves whose gradient the caller wants; outputs
    of recorded primitives are marked automatically so intermediate
    gradients (e.g. with respect to looked-up embedding rows) can be read
    after backward.
    """

    __slots__ = ("values", "requires_grad", "grad")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def item(self) -> float:
        return float(self.values.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"


class _Op:
    __slots__ = ("output", "inputs", "backward")

    def __init__(self, output, inputs, backward):
        self.output = output
        self.inputs = inputs
        self.backward = backward


_ACTIVE = threading.local()


def _current_tape():
    stack = getattr(_ACTIVE, "stack", None)
    return stack[-1] if stack else None


class Tape:
    """Ordered record of primitive operations for one forward pass.

    Recording order is a topological order of the computation, so backward
    simply walks the list in reverse.  A tape can be consumed by backward
    exactly once; run a new forward on a fresh tape afterwards.
    """

    def __init__(self):
        self._ops: list[_Op] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        stack = getattr(_ACTIVE, "stack", None)
        if stack is None:
            stack = _ACTIVE.stack = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE.stack.pop()
        return False

    def _record(self, output: Tensor, inputs: Sequence[Tensor], backward: Callable):
        output.requires_grad = True
        self._ops.append(_Op(output, tuple(inputs), backward))

    def __len__(self) -> int:
        return len(self._ops)

    def backward(self, output: Tensor) -> None:
        """Populate ``.grad`` of every recorded tensor with d(output)/d(tensor).

        ``output`` must be a scalar (size-1) tensor produced under this tape.
        Tensors that were recorded but do not influence the output receive a
        zero gradient.
        """
        if self._consumed:
            raise BackwardError("tape already consumed by a previous backward; run a new forward")
        if output.values.size != 1:
            raise BackwardError(f"backward requires a scalar output, got shape {output.values.shape}")
        if not self._ops:
            raise BackwardError("tape is empty; nothing was recorded")
        self._consumed = True

        grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.values)}
        for op in reversed(self._ops):
            g_out = grads.get(id(op.output))
            if g_out is None:
                continue
            for tensor, contrib in zip(op.inputs, op.backward(g_out)):
                if contrib is None:
                    continue
                key = id(tensor)
                held = grads.get(key)
                grads[key] = contrib if held is None else held + contrib

        seen: set[int] = set()
        for op in self._ops:
            for t in (op.output,) + op.inputs:
                key = id(t)
                if key in seen or not t.requires_grad:
                    continue
                seen.add(key)
                g = grads.get(key)
                t.grad = np.zeros_like(t.values) if g is None else g


def _result(primitive: str, values: np.ndarray, inputs: Sequence[Tensor], backward) -> Tensor:
    tape = _current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out = Tensor(values)
        tape._record(out, inputs, backward)
        return out
    return Tensor(values)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix/vector product with numpy semantics for 1-D and 2-D operands."""
    av, bv = a.values, b.values
    if av.ndim not in (1, 2) or bv.ndim not in (1, 2):
        raise ShapeMismatch("matmul", av.shape, bv.shape)
    if av.shape[-1] != (bv.shape[0] if bv.ndim >= 1 else None):
        raise ShapeMismatch("matmul", av.shape, bv.shape)
    values = av @ bv

    def backward(g):
        if av.ndim == 2 and bv.ndim == 2:
            return g @ bv.T, av.T @ g
        if av.ndim == 2 and bv.ndim == 1:
            return np.outer(g, bv), av.T @ g
        if av.ndim == 1 and bv.ndim == 2:
            return g @ bv.T, np.outer(av, g)
        return g * bv, g * av

    return _result("matmul", values, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; the only broadcast allowed is a bias along the last axis."""
    av, bv = a.values, b.values
    bias_add = bv.ndim == 1 and av.ndim >= 1 and av.shape[-1:] == bv.shape and av.shape != bv.shape
    if av.shape != bv.shape and not bias_add:
        raise ShapeMismatch("add", av.shape, bv.shape)
    values = av + bv

    def backward(g):
        gb = g.sum(axis=tuple(range(g.ndim - 1))) if bias_add else g
        return g, gb

    return _result("add", values, (a, b), backward)


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply by a python scalar."""
    c = float(c)
    return _result("scale", x.values * c, (x,), lambda g: (g * c,))


def relu(x: Tensor) -> Tensor:
    mask = x.values > 0.0  # derivative at exactly 0 is 0
    return _result("relu", np.where(mask, x.values, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    v = x.values
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return _result("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def softmax_cross_entropy(logits: Tensor, label: int) -> Tensor:
    """Cross entropy of a 1-D logit vector against an integer class label."""
    v = logits.values
    if v.ndim != 1:
        raise ShapeMismatch("softmax_cross_entropy", v.shape)
    if not 0 <= label < v.shape[0]:
        raise AutodiffError(f"softmax_cross_entropy: label {label} out of range for {v.shape[0]} classes")
    shifted = v - v.max()
    logsumexp = np.log(np.exp(shifted).sum()) + v.max()
    values = np.asarray(logsumexp - v[label])

    def backward(g):
        p = np.exp(shifted)
        p /= p.sum()
        p[label] -= 1.0
        return (g * p,)

    return _result("softmax_cross_entropy", values, (logits,), backward)


def logistic_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Per-element binary cross entropy on logits, labels in {0,1} (constant).

    Numerically stable form max(z,0) - z*y + log(1+exp(-|z|)); the 2-class
    special case of softmax cross entropy for a single-logit classifier.
    """
    z = logits.values
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != z.shape:
        raise ShapeMismatch("logistic_loss", z.shape, y.shape)
    values = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))

    def backward(g):
        p = np.empty_like(z)
        pos = z >= 0
        p[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        p[~pos] = ez / (1.0 + ez)
        return (g * (p - y),)

    return _result("logistic_loss", values, (logits,), backward)


def max_pool(x: Tensor, axis: int) -> Tensor:
    """Max over one axis (max-over-time pooling); grad flows to the first argmax."""
    v = x.values
    if v.ndim == 0 or v.shape[axis] == 0:
        raise ShapeMismatch("max_pool", v.shape)
    values = v.max(axis=axis)
    argmax = v.argmax(axis=axis)

    def backward(g):
        gx = np.zeros_like(v)
        idx = list(np.indices(values.shape))
        idx.insert(axis if axis >= 0 else v.ndim + axis, argmax)
        gx[tuple(idx)] = g
        return (gx,)

    return _result("max_pool", values, (x,), backward)


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    v = x.values
    if v.size == 0:
        raise ShapeMismatch("mean", v.shape)
    values = v.mean(axis=axis)

    def backward(g):
        if axis is None:
            return (np.full_like(v, 1.0 / v.size) * g,)
        n = v.shape[axis]
        return (np.repeat(np.expand_dims(g / n, axis), n, axis=axis),)

    return _result("mean", np.asarray(values), (x,), backward)


def total(x: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    v = x.values
    return _result("total", np.asarray(v.sum()), (x,), lambda g: (np.full_like(v, 1.0) * g,))


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    vals = [p.values for p in parts]
    if not vals:
        raise ShapeMismatch("concat")
    nd = vals[0].ndim
    for v in vals[1:]:
        if v.ndim != nd or v.shape[:axis] + v.shape[axis + 1:] != vals[0].shape[:axis] + vals[0].shape[axis + 1:]:
            raise ShapeMismatch("concat", *[v.shape for v in vals])
    values = np.concatenate(vals, axis=axis)
    sizes = [v.shape[axis] for v in vals]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _result("concat", values, tuple(parts), backward)


def dropout(x: Tensor, mask: np.ndarray) -> Tensor:
    """Apply an externally generated mask elementwise.

    The caller owns the mask (0/1, or 0/(1/keep) for inverted dropout) and
    its randomness; this op is deterministic given the mask.
    """
    m = np.asarray(mask, dtype=np.float64)
    if m.shape != x.values.shape:
        raise ShapeMismatch("dropout", x.values.shape, m.shape)
    return _result("dropout", x.values * m, (x,), lambda g: (g * m,))


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of a (V, d) table by an int array of ids (1-D or 2-D)."""
    tv = table.values
    ids = np.asarray(ids)
    if tv.ndim != 2 or not np.issubdtype(ids.dtype, np.integer):
        raise ShapeMismatch("embedding_lookup", tv.shape, ids.shape)
    if ids.size and (ids.min() < 0 or ids.max() >= tv.shape[0]):
        raise AutodiffError(f"embedding_lookup: id out of range for table with {tv.shape[0]} rows")
    values = tv[ids]

    def backward(g):
        gt = np.zeros_like(tv)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, tv.shape[1]))
        return (gt,)

    return _result("embedding_lookup", values, (table,), backward)


def windows(x: Tensor, width: int) -> Tensor:
    """Sliding windows over the time axis, flattened per position.

    (n, d) -> (n-width+1, width*d); (B, n, d) -> (B, n-width+1, width*d).
    Each output row is the concatenation of ``width`` consecutive input rows,
    which turns a 1-D convolution into a single matmul.
    """
    v = x.values
    if v.ndim not in (2, 3) or v.shape[-2] < width or width < 1:
        raise ShapeMismatch("windows", v.shape, (width,))
    n, d = v.shape[-2], v.shape[-1]
    p = n - width + 1
    view = np.lib.stride_tricks.sliding_window_view(v, width, axis=v.ndim - 2)
    # view: (..., p, d, width) -> (..., p, width, d) -> flatten the window
    values = np.ascontiguousarray(view.swapaxes(-1, -2)).reshape(v.shape[:-2] + (p, width * d))

    def backward(g):
        gx = np.zeros_like(v)
        gw = g.reshape(v.shape[:-2] + (p, width, d))
        for k in range(width):
            gx[..., k:k + p, :] += gw[..., :, k, :]
        return (gx,)

    return _result("windows", values, (x,), backward)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    v = x.values
    try:
        values = v.reshape(shape)
    except ValueError:
        raise ShapeMismatch("reshape", v.shape, shape) from None
    return _result("reshape", values, (x,), lambda g: (g.reshape(v.shape),))


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def finite_difference_check(f, point: Tensor, h: float = 1e-5) -> float:
    """Compare the taped gradient of scalar ``f`` at ``point`` to central differences.

    Returns max over coordinates of |analytic - numeric| / max(1, |analytic|).
    ``f`` must be a pure function of the point tensor's values; inputs where
    ``f`` is not differentiable (ReLU kinks, pooling ties) are the caller's
    responsibility to avoid.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    point.requires_grad = True
    with Tape() as tape:
        out = f(point)
    if out.values.size != 1:
        raise BackwardError("finite_difference_check requires a scalar-valued function")
    tape.backward(out)
    analytic = point.grad.reshape(-1).copy()

    base = point.values.copy()
    flat = point.values.reshape(-1)
    numeric = np.empty_like(analytic)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = f(Tensor(point.values)).values
        flat[i] = orig - h
        lo = f(Tensor(point.values)).values
        flat[i] = orig
        if not (np.isfinite(hi).all() and np.isfinite(lo).all()):
            point.values[...] = base
            raise AutodiffError("finite_difference_check: f is non-finite at a perturbed point")
        numeric[i] = (float(hi.reshape(-1)[0]) - float(lo.reshape(-1)[0])) / (2.0 * h)
    point.values[...] = base

    denom = np.maximum(1.0, np.abs(analytic))
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0
