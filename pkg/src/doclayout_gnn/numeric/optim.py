"""Parameter storage, Adam, and the central-difference gradient oracle."""

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .tensor import NumericFailure, Tensor, backward, no_grad


class ParamStore:
    """Ordered name -> parameter tensor map; each parameter owns a grad slot."""

    def __init__(self):
        self._params = OrderedDict()

    def add(self, name, data):
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self, prefix=""):
        return [n for n in self._params if n.startswith(prefix)]

    def zero_grad(self):
        for t in self._params.values():
            t.grad[...] = 0.0

    def size(self):
        return int(sum(t.data.size for t in self._params.values()))

    def snapshot(self):
        return {n: t.data.copy() for n, t in self._params.items()}


@dataclass
class AdamState:
    names: list
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def fresh(cls, store, names, lr=1e-3):
        return cls(
            names=list(names),
            lr=lr,
            m={n: np.zeros_like(store[n].data) for n in names},
            v={n: np.zeros_like(store[n].data) for n in names},
        )


def adam_step(store, state):
    """One bias-corrected Adam update over ``state.names``; zeroes their grads."""
    for n in state.names:
        if not np.all(np.isfinite(store[n].grad)):
            raise NumericFailure(f"numeric failure: non-finite gradient in {n}")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for n in state.names:
        p = store[n]
        g = p.grad
        m = state.m[n]
        v = state.v[n]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        g[...] = 0.0


def finite_diff_check(f, store, h=1e-5, names=None):
    """Max relative error between tape gradients and central differences.

    ``f`` takes no arguments and returns a scalar Tensor computed from the
    parameters in ``store``; it must be deterministic. The denominator of
    each relative error is ``max(1e-8, |analytic|)``.
    """
    names = list(store) if names is None else list(names)
    store.zero_grad()
    backward(f())
    worst = 0.0
    with no_grad():
        for n in names:
            p = store[n]
            analytic = p.grad.copy()
            flat = p.data.reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + h
                up = float(f().data)
                flat[k] = orig - h
                down = float(f().data)
                flat[k] = orig
                numeric = (up - down) / (2.0 * h)
                a = analytic.reshape(-1)[k]
                err = abs(a - numeric) / max(1e-8, abs(a))
                if err > worst:
                    worst = err
    store.zero_grad()
    return worst
