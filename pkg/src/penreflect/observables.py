"""Bounded test functions with known gradients and Lipschitz constants."""

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["Observable", "constant", "coordinate", "cosine", "sine", "product", "ones"]


@dataclass(frozen=True)
class Observable:
    """A test function ``phi`` on ``R^d``, vectorized over leading axes."""

    name: str
    f: Callable
    grad: Callable
    lipschitz: float
    sup_norm: float

    def __call__(self, x):
        return self.f(np.asarray(x, dtype=float))


def constant(c=1.0):
    c = float(c)
    return Observable(f"const({c:g})", lambda x: np.full(x.shape[:-1], c),
                      lambda x: np.zeros_like(x), 0.0, abs(c))


ones = constant(1.0)


def coordinate(i=0, clip=None):
    """``x_i``, optionally clipped to ``[-clip, clip]``."""
    if clip is None:
        name = f"x{i}"

        def f(x):
            return x[..., i].copy()

        def grad(x):
            g = np.zeros_like(x)
            g[..., i] = 1.0
            return g

        return Observable(name, f, grad, 1.0, np.inf)
    c = float(clip)

    def f(x):
        return np.clip(x[..., i], -c, c)

    def grad(x):
        g = np.zeros_like(x)
        g[..., i] = (np.abs(x[..., i]) < c).astype(float)
        return g

    return Observable(f"clip(x{i},{c:g})", f, grad, 1.0, c)


def cosine(h, phase=0.0):
    """``cos(<h, x> + phase)``."""
    h = np.atleast_1d(np.asarray(h, dtype=float))
    return Observable(f"cos({h.tolist()},{phase:g})",
                      lambda x: np.cos(x @ h + phase),
                      lambda x: -np.sin(x @ h + phase)[..., None] * h,
                      float(np.linalg.norm(h)), 1.0)


def sine(h, phase=0.0):
    h = np.atleast_1d(np.asarray(h, dtype=float))
    return Observable(f"sin({h.tolist()},{phase:g})",
                      lambda x: np.sin(x @ h + phase),
                      lambda x: np.cos(x @ h + phase)[..., None] * h,
                      float(np.linalg.norm(h)), 1.0)


def product(a, b):
    """Pointwise product of two bounded observables."""
    lip = a.lipschitz * b.sup_norm + b.lipschitz * a.sup_norm
    return Observable(f"{a.name}*{b.name}", lambda x: a.f(x) * b.f(x),
                      lambda x: a.grad(x) * b.f(x)[..., None] + b.grad(x) * a.f(x)[..., None],
                      lip, a.sup_norm * b.sup_norm)
