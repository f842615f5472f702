"""Dense float64 tensors with a reverse-mode tape.

Every op builds its output eagerly and, when any input requires gradients,
records a closure mapping the output gradient to input gradients.
``backward`` walks the recorded graph in reverse topological order.
"""

import contextlib
import threading

import numpy as np

PROB_EPS = 1e-7

_state = threading.local()


def _recording():
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable tape recording in the current thread."""
    prev = _recording()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class NumericFailure(ArithmeticError):
    """Raised when a loss or gradient becomes NaN or infinite."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    out = Tensor(data)
    if _recording() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(loss):
    """Accumulate d(loss)/d(leaf) into every leaf's ``grad`` slot."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad += g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


# ---------------------------------------------------------------- elementwise


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    # NaN passes through so the caller's finiteness checks can see it
    return _make(np.where(mask | np.isnan(x.data), x.data, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x):
    x = as_tensor(x)
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    out[~pos] = e / (1.0 + e)
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),))


def exp(x):
    x = as_tensor(x)
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,))


def log(x):
    x = as_tensor(x)
    d = x.data
    return _make(np.log(d), (x,), lambda g: (g / d,))


def clip(x, low, high):
    """Clamp; the gradient is zero wherever the clamp is active."""
    x = as_tensor(x)
    d = x.data
    inside = (d >= low) & (d <= high)
    return _make(np.clip(d, low, high), (x,), lambda g: (g * inside,))


def minimum(a, b):
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data <= b.data
    return _make(np.where(pick_a | np.isnan(a.data), a.data, b.data), (a, b),
                 lambda g: (_unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)))


def maximum(a, b):
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data >= b.data
    return _make(np.where(pick_a | np.isnan(a.data), a.data, b.data), (a, b),
                 lambda g: (_unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)))


# ---------------------------------------------------------------- linear algebra


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return _make(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def affine(x, W, b):
    """``x @ W + b`` for x (n, p), W (p, q), b (q,)."""
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    if x.data.ndim != 2 or W.data.ndim != 2 or x.shape[1] != W.shape[0]:
        raise ValueError(f"affine shape mismatch: x{x.shape} vs W{W.shape}")
    if b.shape != (W.shape[1],):
        raise ValueError(f"affine shape mismatch: W{W.shape} vs b{b.shape}")
    xd, Wd = x.data, W.data
    return _make(xd @ Wd + b.data, (x, W, b),
                 lambda g: (g @ Wd.T, xd.T @ g, g.sum(axis=0)))


# ---------------------------------------------------------------- reductions


def sum(x):  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    shape = x.shape
    return _make(np.sum(x.data), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(x):
    x = as_tensor(x)
    shape, n = x.shape, x.data.size
    return _make(np.mean(x.data), (x,), lambda g: (np.full(shape, g / n),))


def sum_axis(x, axis):
    x = as_tensor(x)
    shape = x.shape
    return _make(x.data.sum(axis=axis), (x,),
                 lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),))


def softmax_rows(x):
    x = as_tensor(x)
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)

    def _bw(g):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return _make(out, (x,), _bw)


# ---------------------------------------------------------------- structure


def index(x, key):
    x = as_tensor(x)
    shape = x.shape

    parts = key if isinstance(key, tuple) else (key,)
    basic = all(isinstance(k, (int, slice)) or k is None or k is Ellipsis for k in parts)

    def _bw(g):
        full = np.zeros(shape)
        if basic:
            full[key] += g
        else:
            np.add.at(full, key, g)
        return (full,)

    return _make(x.data[key], (x,), _bw)


def reshape(x, shape):
    x = as_tensor(x)
    old = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def _bw(g):
        sl = [slice(None)] * g.ndim
        parts = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            sl[axis] = slice(lo, hi)
            parts.append(g[tuple(sl)])
        return tuple(parts)

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), _bw)


def gather_rows(x, idx):
    """Rows ``x[idx]`` for an integer index array."""
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    n = x.shape[0]

    def _bw(g):
        return (_segment_sum_array(g, idx, n),)

    return _make(x.data[idx], (x,), _bw)


def _segment_sum_array(values, idx, n):
    out = np.zeros((n,) + values.shape[1:])
    np.add.at(out, idx, values)
    return out


def segment_sum(x, idx, n):
    """``out[k] = sum of x[i] over i with idx[i] == k``; out has n rows."""
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    if len(idx) != x.shape[0]:
        raise ValueError(f"segment_sum: {len(idx)} indices for {x.shape[0]} rows")
    return _make(_segment_sum_array(x.data, idx, n), (x,), lambda g: (g[idx],))


# ---------------------------------------------------------------- losses


def mse(pred, target):
    """Mean of squared differences."""
    pred = as_tensor(pred)
    t = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    diff = pred.data - t
    n = diff.size
    return _make(np.mean(diff * diff), (pred,), lambda g: (g * 2.0 * diff / n,))


def bce(prob, target, reduction="mean"):
    """Binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7].

    ``reduction`` is "mean" or "sum" over all entries.
    """
    prob = as_tensor(prob)
    t = np.broadcast_to(np.asarray(target, dtype=np.float64), prob.shape)
    raw = prob.data
    p = np.clip(raw, PROB_EPS, 1.0 - PROB_EPS)
    terms = -(t * np.log(p) + (1.0 - t) * np.log1p(-p))
    scale = 1.0 / terms.size if reduction == "mean" else 1.0
    inside = (raw >= PROB_EPS) & (raw <= 1.0 - PROB_EPS)

    def _bw(g):
        return (g * scale * inside * (-(t / p) + (1.0 - t) / (1.0 - p)),)

    value = np.sum(terms) * scale if reduction == "sum" else np.mean(terms)
    return _make(value, (prob,), _bw)


def neg_log_prob(prob):
    """Sum of ``-log(clamp(p))`` over all entries."""
    prob = as_tensor(prob)
    raw = prob.data
    p = np.clip(raw, PROB_EPS, 1.0 - PROB_EPS)
    inside = (raw >= PROB_EPS) & (raw <= 1.0 - PROB_EPS)
    return _make(-np.sum(np.log(p)), (prob,), lambda g: (-g * inside / p,))


def kl_diag_gaussian(mu, log_var):
    """KL(N(mu, exp(log_var)) || N(0, I)), summed over all entries."""
    mu, log_var = as_tensor(mu), as_tensor(log_var)
    m, lv = mu.data, log_var.data
    ev = np.exp(lv)
    value = 0.5 * np.sum(m * m + (np.expm1(lv) - lv))
    return _make(value, (mu, log_var), lambda g: (g * m, g * 0.5 * (ev - 1.0)))
