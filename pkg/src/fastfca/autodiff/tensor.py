"""Reverse-mode automatic differentiation over float64 numpy arrays.

Every operation is evaluated eagerly and, when one of its inputs requires a
gradient, appends a node to an implicit tape (the ``parents`` links).  Calling
:func:`backward` on a scalar walks that tape in reverse topological order.

Complex quantities are handled one level up (see :mod:`.complex`) as pairs of
real tensors, so every gradient here is an ordinary real gradient.
"""
import contextlib

import numpy as np
from scipy.special import expit

from ..exceptions import GradientError, NonFiniteError, ShapeError

EPS = 1e-12

_state = {"grad_enabled": True, "check_finite": True}


@contextlib.contextmanager
def no_grad():
    """Evaluate operations without recording them on the tape."""
    prev = _state["grad_enabled"]
    _state["grad_enabled"] = False
    try:
        yield
    finally:
        _state["grad_enabled"] = prev


def is_grad_enabled():
    return _state["grad_enabled"]


class Tensor:
    """A float64 array that remembers how it was computed.

    Parameters
    ----------
    data : array_like
        Values; always converted to a float64 array.
    requires_grad : bool
        Mark as a trainable leaf.
    name : str, optional
        Used in checkpoints and error messages.
    """

    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self.op = "leaf"
        self.parents = ()
        self._backward = None

    # -- basic properties ---------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def T(self):
        return transpose(self)

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{tag})"

    # -- operator sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def backward(self):
        backward(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, op, parents, backward_fn):
    data = np.asarray(data, dtype=np.float64)
    if _state["check_finite"] and not np.isfinite(data).all():
        raise NonFiniteError(op)
    out = Tensor(data)
    out.op = op
    if _state["grad_enabled"] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- graph traversal ---------------------------------------------------------
def topological_order(root):
    """Nodes reachable from ``root``; every parent precedes its children."""
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every trainable leaf."""
    if not isinstance(loss, Tensor):
        raise GradientError("loss must be a Tensor")
    if loss.size != 1:
        raise GradientError(f"loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GradientError("loss does not depend on any trainable tensor")
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topological_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        needs = [p.requires_grad for p in node.parents]
        pgrads = node._backward(g, needs)
        for p, need, pg in zip(node.parents, needs, pgrads):
            if not need or pg is None:
                continue
            pg = _unbroadcast(np.asarray(pg, dtype=np.float64), p.shape)
            if _state["check_finite"] and not np.isfinite(pg).all():
                raise NonFiniteError(f"backward of {node.op}")
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def gradients(loss, params):
    """Return d(loss)/d(p) for each p in ``params`` (zeros where unused)."""
    for p in params:
        p.grad = None
    backward(loss)
    return [np.zeros_like(p.data) if p.grad is None else p.grad for p in params]


# -- elementwise arithmetic --------------------------------------------------
def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data + b.data, "add", (a, b), lambda g, n: (g, g))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data - b.data, "sub", (a, b), lambda g, n: (g, -g))


def neg(a):
    return _node(-a.data, "neg", (a,), lambda g, n: (-g,))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def bw(g, n):
        return (g * bd if n[0] else None, g * ad if n[1] else None)

    return _node(ad * bd, "mul", (a, b), bw)


def reciprocal(a):
    """1/a with the argument floored at EPS (intended for positive inputs)."""
    a = as_tensor(a)
    active = a.data > EPS
    y = 1.0 / np.where(active, a.data, EPS)
    return _node(y, "reciprocal", (a,), lambda g, n: (-g * y * y * active,))


def div(a, b):
    return mul(a, reciprocal(b))


def log(a):
    """Natural log with the argument floored at EPS."""
    a = as_tensor(a)
    active = a.data > EPS
    safe = np.where(active, a.data, EPS)
    return _node(np.log(safe), "log", (a,), lambda g, n: (g / safe * active,))


def exp(a):
    with np.errstate(over="ignore"):
        y = np.exp(a.data)
    return _node(y, "exp", (a,), lambda g, n: (g * y,))


def power(a, p):
    """a**p for a constant exponent; non-integer or negative powers floor a at EPS."""
    a = as_tensor(a)
    p = float(p)
    if p.is_integer() and p >= 0:
        y = a.data**p
        return _node(y, "pow", (a,), lambda g, n: (g * p * a.data ** (p - 1),))
    active = a.data > EPS
    base = np.where(active, a.data, EPS)
    y = base**p
    return _node(y, "pow", (a,), lambda g, n: (g * p * y / base * active,))


def sqrt(a):
    return power(a, 0.5)


def sigmoid(a):
    y = expit(a.data)
    return _node(y, "sigmoid", (a,), lambda g, n: (g * y * (1.0 - y),))


def softplus(a):
    x = a.data
    return _node(np.logaddexp(0.0, x), "softplus", (a,), lambda g, n: (g * expit(x),))


def prelu(x, alpha, axis=1):
    """Parametric ReLU with one slope per entry along ``axis``."""
    shape = [1] * x.ndim
    shape[axis] = -1
    al = alpha.data.reshape(shape)
    pos = x.data > 0

    def bw(g, n):
        gx = g * np.where(pos, 1.0, al) if n[0] else None
        ga = None
        if n[1]:
            red = tuple(i for i in range(x.ndim) if i != axis % x.ndim)
            ga = (g * np.where(pos, 0.0, x.data)).sum(axis=red)
        return gx, ga

    return _node(np.where(pos, x.data, al * x.data), "prelu", (x, alpha), bw)


def sign(a):
    """Sign function; marked non-differentiable."""

    def bw(g, n):
        raise GradientError("sign is not differentiable")

    return _node(np.sign(a.data), "sign", (a,), bw)


# -- reductions and shape ops ------------------------------------------------
def tsum(a, axis=None, keepdims=False):
    shape = a.shape

    def bw(g, n):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _node(a.data.sum(axis=axis, keepdims=keepdims), "sum", (a,), bw)


def mean(a, axis=None, keepdims=False):
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[i] for i in axes]))
    return tsum(a, axis, keepdims) * (1.0 / count)


def reshape(a, shape):
    old = a.shape
    return _node(a.data.reshape(shape), "reshape", (a,), lambda g, n: (g.reshape(old),))


def transpose(a, axes=None):
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return _node(a.data.transpose(axes), "transpose", (a,), lambda g, n: (g.transpose(inv),))


def getitem(a, idx):
    shape = a.shape
    parts = idx if isinstance(idx, tuple) else (idx,)
    basic = all(p is None or p is Ellipsis or isinstance(p, (int, np.integer, slice))
                for p in parts)

    def bw(g, n):
        out = np.zeros(shape)
        if basic:
            out[idx] = g
        else:
            np.add.at(out, idx, g)
        return (out,)

    return _node(a.data[idx], "getitem", (a,), bw)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g, n):
        return tuple(np.split(g, cuts, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), "concat", tensors, bw)


def stack(tensors, axis=0):
    return concat([expand(as_tensor(t), axis) for t in tensors], axis=axis)


def expand(a, axis):
    return reshape(a, np.expand_dims(a.data, axis).shape)


# -- contractions ------------------------------------------------------------
def _parse_einsum(subscripts, n_ops):
    if "->" not in subscripts or "." in subscripts:
        raise ShapeError("einsum needs explicit '->' output and no ellipsis")
    lhs, out = subscripts.replace(" ", "").split("->")
    ins = lhs.split(",")
    if len(ins) != n_ops:
        raise ShapeError(f"einsum expects {len(ins)} operands, got {n_ops}")
    for s in ins:
        if len(set(s)) != len(s):
            raise ShapeError(f"repeated index within operand '{s}' is not supported")
    return ins, out


def einsum(subscripts, *operands):
    """Differentiable ``np.einsum`` (explicit output, no ellipsis, no diagonals)."""
    ops = [as_tensor(o) for o in operands]
    ins, out = _parse_einsum(subscripts, len(ops))
    arrays = [o.data for o in ops]
    try:
        y = np.einsum(subscripts, *arrays, optimize=len(ops) > 1)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc

    def bw(g, needs):
        grads = []
        for i, need in enumerate(needs):
            if not need:
                grads.append(None)
                continue
            others = [ins[j] for j in range(len(ins)) if j != i]
            avail = set(out).union(*others) if others else set(out)
            kept = "".join(c for c in ins[i] if c in avail)
            expr = ",".join([out] + others) + "->" + kept
            gi = np.einsum(expr, g, *[arrays[j] for j in range(len(ins)) if j != i],
                           optimize=len(ins) > 1)
            if kept != ins[i]:
                for pos, c in enumerate(ins[i]):
                    if c not in avail:
                        gi = np.expand_dims(gi, pos)
                gi = np.broadcast_to(gi, arrays[i].shape)
            grads.append(gi)
        return tuple(grads)

    return _node(y, "einsum", ops, bw)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must be at least 2-D")
    try:
        y = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc

    def bw(g, n):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if n[0] else None
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if n[1] else None
        return ga, gb

    return _node(y, "matmul", (a, b), bw)


def conv1d(x, weight, bias=None):
    """'Same'-padded 1-D convolution (cross-correlation).

    x : (batch, c_in, T); weight : (c_out, c_in, K) with K odd; bias : (c_out,).
    """
    B, C, T = x.shape
    c_out, c_in, K = weight.shape
    if c_in != C:
        raise ShapeError(f"conv1d expects {c_in} input channels, got {C}")
    if K % 2 != 1:
        raise ShapeError("conv1d kernel size must be odd")
    pad = K // 2
    if K == 1:
        y = np.einsum("oi,bit->bot", weight.data[:, :, 0], x.data, optimize=True)
    else:
        xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad)))
        cols = np.stack([xp[:, :, k:k + T] for k in range(K)], axis=2)  # (B, C, K, T)
        y = np.einsum("oik,bikt->bot", weight.data, cols, optimize=True)
    if bias is not None:
        y = y + bias.data[None, :, None]
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g, n):
        gx = gw = gb = None
        if K == 1:
            if n[0]:
                gx = np.einsum("oi,bot->bit", weight.data[:, :, 0], g, optimize=True)
            if n[1]:
                gw = np.einsum("bot,bit->oi", g, x.data, optimize=True)[:, :, None]
        else:
            if n[0]:
                gcols = np.einsum("oik,bot->bikt", weight.data, g, optimize=True)
                gxp = np.zeros((B, C, T + 2 * pad))
                for k in range(K):
                    gxp[:, :, k:k + T] += gcols[:, :, k, :]
                gx = gxp[:, :, pad:pad + T]
            if n[1]:
                gw = np.einsum("bot,bikt->oik", g, cols, optimize=True)
        if bias is not None and n[2]:
            gb = g.sum(axis=(0, 2))
        return (gx, gw, gb) if bias is not None else (gx, gw)

    return _node(y, "conv1d", parents, bw)


def logabsdet(a):
    """log|det A| over the last two axes of a real (batched) square matrix."""
    sign_, val = np.linalg.slogdet(a.data)
    if np.any(sign_ == 0):
        raise NonFiniteError("logabsdet", "singular matrix")

    def bw(g, n):
        inv_t = np.swapaxes(np.linalg.inv(a.data), -1, -2)
        return (g[..., None, None] * inv_t,)

    return _node(val, "logabsdet", (a,), bw)

