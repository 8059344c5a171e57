from __future__ import annotations

import numpy as np

from .params import ParameterStore


def adam_step(params: ParameterStore, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update using the gradients held by `params`."""
    missing = [k for k, t in params.items() if t.grad is None]
    if missing:
        raise RuntimeError(f"missing gradients for {missing[:3]}{'...' if len(missing) > 3 else ''}")
    params.step += 1
    t = params.step
    corr1 = 1.0 - beta1 ** t
    corr2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = p.grad
        m = params.m.get(name)
        if m is None:
            m = params.m[name] = np.zeros_like(p.data)
            params.v[name] = np.zeros_like(p.data)
        v = params.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / corr1
        v_hat = v / corr2
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype, copy=False)


def weight_decay_gradient(params: ParameterStore, lam: float) -> None:
    """Add the gradient 2*lam*w of lam*||W||^2 to every weight (biases excluded)."""
    if lam == 0:
        return
    for _, p in params.weights():
        inc = (2.0 * lam) * p.data
        if p.grad is None:
            p.grad = inc.astype(p.data.dtype)
        else:
            p.grad += inc


def weight_norm_sq(params: ParameterStore) -> float:
    return float(sum(np.sum(p.data.astype(np.float64) ** 2) for _, p in params.weights()))


def clip_(params: ParameterStore, c: float) -> None:
    for _, p in params.items():
        np.clip(p.data, -c, c, out=p.data)
