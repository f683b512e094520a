"""AdamW with decoupled weight decay and a one-cycle step-size schedule."""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError
from .network import ModelParams


class AdamW:
    """Decoupled-weight-decay Adam over a ModelParams instance.

    The decay term multiplies the parameter directly (never enters the
    moment estimates), so a step with zero gradients and zero decay leaves
    parameters bit-unchanged.
    """

    def __init__(self, params: ModelParams, lr: float = 1e-4,
                 betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 1e-4):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = {name: np.zeros_like(t.data) for name, t in params.tensors.items()}
        self._v = {name: np.zeros_like(t.data) for name, t in params.tensors.items()}

    def step(self, grads: dict[str, np.ndarray] | None = None) -> None:
        """Apply one update from explicit grads or the tensors' .grad buffers."""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, tensor in self.params.tensors.items():
            g = grads.get(name) if grads is not None else tensor.grad
            if g is None:
                g = np.zeros_like(tensor.data)
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            tensor.data = tensor.data - self.lr * (update + self.weight_decay * tensor.data)

    def zero_grad(self) -> None:
        self.params.zero_grad()


class OneCycleSchedule:
    """Cosine warmup to the peak step size, then cosine anneal back down.

    lr(0) = peak / div_factor, lr(warmup end) = peak, lr(last) =
    peak / div_factor; warmup ends at round(warmup_frac * (total - 1)).
    """

    def __init__(self, peak_lr: float, total_steps: int,
                 warmup_frac: float = 0.3, div_factor: float = 25.0):
        if total_steps < 1:
            raise DomainError(f"total_steps must be >= 1, got {total_steps}")
        if not (0.0 < warmup_frac < 1.0):
            raise DomainError(f"warmup_frac must be in (0, 1), got {warmup_frac}")
        self.peak_lr = peak_lr
        self.total_steps = total_steps
        self.div_factor = div_factor
        self.floor_lr = peak_lr / div_factor
        self.warmup_steps = max(1, round(warmup_frac * (total_steps - 1)))

    def lr_at(self, step: int) -> float:
        if not (0 <= step < self.total_steps):
            raise DomainError(f"step {step} outside [0, {self.total_steps})")
        if self.total_steps == 1:
            return self.peak_lr
        w = self.warmup_steps
        if step <= w:
            frac = step / w
            return self.floor_lr + (self.peak_lr - self.floor_lr) * 0.5 * (1.0 - math.cos(math.pi * frac))
        span = self.total_steps - 1 - w
        if span <= 0:
            return self.peak_lr
        frac = (step - w) / span
        return self.floor_lr + (self.peak_lr - self.floor_lr) * 0.5 * (1.0 + math.cos(math.pi * frac))
