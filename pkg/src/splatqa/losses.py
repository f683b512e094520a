"""Hybrid correlation training objective.

The linearity term penalizes deviation from perfect Pearson correlation
between predicted and target scores; the monotonicity term is a pairwise
hinge over every ordered pair in the batch. Both are differentiable through
the autodiff engine; passing plain arrays returns plain floats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, as_tensor
from .errors import DomainError

#: guard below which the correlation is treated as undefined and the loss as 1
VARIANCE_GUARD = 1e-12


@dataclass(frozen=True)
class LossConfig:
    lambda_lin: float = 0.5
    lambda_mon: float = 0.5

    def __post_init__(self) -> None:
        if self.lambda_lin < 0 or self.lambda_mon < 0:
            raise DomainError("loss weights must be nonnegative")


def _prepare(yhat, y) -> tuple[Tensor, np.ndarray, bool]:
    was_tensor = isinstance(yhat, Tensor)
    yhat_t = as_tensor(yhat)
    y_arr = np.asarray(y, dtype=np.float64)
    if yhat_t.data.ndim != 1 or y_arr.ndim != 1 or yhat_t.data.shape != y_arr.shape:
        raise DomainError(
            f"score vectors must be equal-length 1-D, got {yhat_t.data.shape} vs {y_arr.shape}"
        )
    if len(y_arr) < 2:
        raise DomainError(f"correlation losses need at least 2 samples, got {len(y_arr)}")
    return yhat_t, y_arr, was_tensor


def loss_lin(yhat, y):
    """1 - Pearson(yhat, y); returns 1.0 when either side is degenerate."""
    yhat_t, y_arr, was_tensor = _prepare(yhat, y)
    b = len(y_arr)
    yc = y_arr - y_arr.mean()
    sigma_y = np.sqrt((yc * yc).mean())
    sigma_p = float(np.std(yhat_t.data))
    if sigma_p * sigma_y < VARIANCE_GUARD:
        out = Tensor(1.0)
        return out if was_tensor else 1.0
    pc = yhat_t - yhat_t.mean()
    cov = (pc * Tensor(yc)).sum() * (1.0 / b)
    sig = ((pc * pc).sum() * (1.0 / b)).sqrt()
    out = 1.0 - cov / (sig * sigma_y)
    return out if was_tensor else float(out.data)


def loss_mon(yhat, y):
    """Pairwise hinge: mean over all B^2 ordered pairs of
    1(y_i > y_j) * max(0, 1 - (yhat_i - yhat_j))."""
    yhat_t, y_arr, was_tensor = _prepare(yhat, y)
    b = len(y_arr)
    indicator = (y_arr[:, None] > y_arr[None, :]).astype(np.float64)
    diff = yhat_t.reshape(b, 1) - yhat_t.reshape(1, b)
    hinge = (1.0 - diff).relu()
    out = (hinge * Tensor(indicator)).sum() * (1.0 / (b * b))
    return out if was_tensor else float(out.data)


def loss_total(yhat, y, cfg: LossConfig = LossConfig()):
    """lambda_lin * loss_lin + lambda_mon * loss_mon."""
    was_tensor = isinstance(yhat, Tensor)
    lin = loss_lin(yhat, y) if was_tensor else loss_lin(as_tensor(np.asarray(yhat, dtype=np.float64)), y)
    mon = loss_mon(yhat, y) if was_tensor else loss_mon(as_tensor(np.asarray(yhat, dtype=np.float64)), y)
    out = as_tensor(lin) * cfg.lambda_lin + as_tensor(mon) * cfg.lambda_mon
    return out if was_tensor else float(out.data)
