"""Shared finite-difference checking and toy-data utilities for the tests."""

import numpy as np

from twistsr.nn import Tensor

STEP = 1e-5


def rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Largest entrywise |a - n| / max(|a|, |n|, floor)."""
    a, n = np.ravel(analytic), np.ravel(numeric)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def numeric_grad(f, arr: np.ndarray, indices=None, h: float = STEP) -> np.ndarray:
    """Central differences of scalar f() w.r.t. entries of `arr`, perturbed in place."""
    flat = arr.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    out = np.zeros(len(idx) if indices is not None else flat.size)
    for k, i in enumerate(idx):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        out[k] = (fp - fm) / (2 * h)
    return out


def projection_loss(forward, weights: np.ndarray):
    """Scalar sum(forward() * weights) as (value, Tensor-returning closure)."""
    def value():
        return float(np.sum(forward().data * weights))
    return value


def check_params(build, params, proj, names=None, max_entries=None, rng=None):
    """Compare backprop and finite differences for every parameter in `params`.

    `build()` returns the output Tensor; the loss is sum(out * proj).
    Returns the worst relative error over all checked entries.
    """
    params.zero_grad()
    out = build()
    out.backward(proj)
    worst = 0.0
    loss = lambda: float(np.sum(build().data * proj))
    for name in names or params.names():
        t = params[name]
        n = t.data.size
        idx = None
        if max_entries is not None and n > max_entries:
            idx = list((rng or np.random.default_rng(0)).choice(n, max_entries, replace=False))
        num = numeric_grad(loss, t.data, idx)
        ana = t.grad.reshape(-1) if idx is None else t.grad.reshape(-1)[idx]
        worst = max(worst, rel_error(ana, num))
    return worst


def check_input(build_from, x: np.ndarray, proj: np.ndarray) -> float:
    xt = Tensor(x, requires_grad=True)
    build_from(xt).backward(proj)
    num = numeric_grad(lambda: float(np.sum(build_from(Tensor(x)).data * proj)), x)
    return rel_error(xt.grad, num)
