"""AdamW with decoupled weight decay, warmup + cosine learning-rate
schedule, and global-norm gradient clipping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteGradientError
from .nn_core import ParameterSet


@dataclass
class OptimHyper:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    max_grad_norm: float = 1.0

    def validate(self) -> None:
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must be in [0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be positive")


@dataclass
class ScheduleConfig:
    peak_lr: float = 1e-4
    warmup_epochs: int = 2
    total_epochs: int = 20
    steps_per_epoch: int = 1
    min_lr: float = 0.0

    def validate(self) -> None:
        if self.warmup_epochs >= self.total_epochs:
            raise ValueError("warmup_epochs must be < total_epochs")
        if self.steps_per_epoch < 1:
            raise ValueError("steps_per_epoch must be >= 1")

    @property
    def warmup_steps(self) -> int:
        return self.warmup_epochs * self.steps_per_epoch

    @property
    def total_steps(self) -> int:
        return self.total_epochs * self.steps_per_epoch


@dataclass
class AdamWState:
    """First/second moment buffers aligned with a ParameterSet by name."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step_count: int = 0

    @classmethod
    def for_params(cls, params: ParameterSet) -> "AdamWState":
        return cls(
            m={t.name: np.zeros_like(t.values) for t in params},
            v={t.name: np.zeros_like(t.values) for t in params},
            step_count=0,
        )


def clip_global_norm(params: ParameterSet, max_norm: float) -> float:
    """Rescale all gradients so their joint L2 norm is at most max_norm.

    Returns the factor applied (1.0 when no clipping happens). Non-finite
    gradients abort, naming the offending parameter.
    """
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    sq = 0.0
    for t in params:
        if not np.all(np.isfinite(t.grad)):
            raise NonFiniteGradientError(f"non-finite gradient in {t.name!r}")
        sq += float(np.sum(np.square(t.grad, dtype=np.float64)))
    norm = math.sqrt(sq)
    if norm <= max_norm or norm == 0.0:
        return 1.0
    factor = max_norm / norm
    for t in params:
        t.grad *= t.grad.dtype.type(factor)
    return factor


def lr_at(step: int, sched: ScheduleConfig) -> float:
    """Learning rate for a 0-based global step.

    Linear ramp from peak_lr/warmup_steps up to peak_lr over the warmup,
    then cosine from peak_lr down to min_lr over the remaining steps. Both
    formulas give peak_lr at the boundary.
    """
    warmup = sched.warmup_steps
    if step < warmup:
        # Ratio first, so the final warmup step is exactly peak_lr.
        return sched.peak_lr * ((step + 1) / warmup)
    t = (step - warmup) / (sched.total_steps - warmup)
    return sched.min_lr + 0.5 * (sched.peak_lr - sched.min_lr) * (1.0 + math.cos(math.pi * t))


def adamw_step(
    params: ParameterSet, state: AdamWState, hyper: OptimHyper, lr: float
) -> None:
    """One decoupled-weight-decay Adam update, in place.

    theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta).
    Decay applies uniformly to weights and biases.
    """
    state.step_count += 1
    t = state.step_count
    b1, b2 = hyper.beta1, hyper.beta2
    bias1 = 1.0 - b1**t
    bias2 = 1.0 - b2**t

    for tensor in params:
        g = tensor.grad
        m = state.m[tensor.name]
        v = state.v[tensor.name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)

        m_hat = m / bias1
        v_hat = v / bias2
        with np.errstate(invalid="ignore", over="ignore"):  # validated below
            update = lr * (
                m_hat / (np.sqrt(v_hat) + hyper.eps) + hyper.weight_decay * tensor.values
            )
        if not np.all(np.isfinite(update)):
            raise NonFiniteGradientError(f"non-finite update for {tensor.name!r}")
        tensor.values -= update.astype(tensor.values.dtype)
