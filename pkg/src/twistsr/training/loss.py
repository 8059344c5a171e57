"""Wavelet-domain L2 loss and the weight-regularized objective."""

from __future__ import annotations

import numpy as np

from ..nn import ParameterStore, Tensor, weight_norm_sq
from ..nn import functional as F


def wavelet_l2_loss(predicted, target) -> tuple[float, np.ndarray]:
    """Mean over the batch of the squared L2 distance between stacked subbands.

    Both arguments are (N_B, 4, h, w) arrays in LL, LH, HL, HH order.
    Returns the loss and its gradient with respect to `predicted`.
    """
    pred = np.asarray(predicted)
    tgt = np.asarray(target)
    if pred.shape != tgt.shape:
        raise ValueError(f"shape mismatch: prediction {pred.shape} vs target {tgt.shape}")
    n_b = pred.shape[0]
    diff = pred - tgt
    return float(np.sum(diff * diff) / n_b), (2.0 / n_b) * diff


def wavelet_l2(predicted: Tensor, target: np.ndarray) -> Tensor:
    """Graph-recording form of `wavelet_l2_loss`."""
    return F.squared_error_sum(predicted, np.asarray(target, dtype=predicted.dtype),
                               factor=1.0 / predicted.shape[0])


def objective(data_loss: float, params: ParameterStore, lam: float) -> float:
    """Data loss plus lam * ||W||^2 over weights (biases excluded).

    The data term is the batch mean; the batch-sum form differs only by the
    constant batch size, which Adam's scale invariance absorbs.
    """
    if lam == 0:
        return float(data_loss)
    return float(data_loss) + lam * weight_norm_sq(params)
