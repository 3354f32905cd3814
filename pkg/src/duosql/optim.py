"""Adam optimizer and the warmup-then-polynomial-decay learning-rate schedule."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ContractError, ParameterStore


@dataclass
class OptimizerState:
    """Adam moment buffers plus hyperparameters; one entry per parameter name."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(store: ParameterStore, opt: OptimizerState, lr_t: float | None = None) -> None:
    """One bias-corrected Adam update over every parameter; clears grads after.

    ``lr_t`` overrides the stored base rate (used with the schedule).
    """
    lr = opt.lr if lr_t is None else float(lr_t)
    opt.step_count += 1
    t = opt.step_count
    bc1 = 1.0 - opt.beta1 ** t
    bc2 = 1.0 - opt.beta2 ** t
    for name, p in store.items():
        if p.grad is None:
            raise ContractError(f"parameter {name!r} has no gradient")
        g = p.grad
        m = opt.m.get(name)
        if m is None:
            m = opt.m[name] = np.zeros_like(p.data)
            opt.v[name] = np.zeros_like(p.data)
        v = opt.v[name]
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * g * g
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + opt.epsilon)
    store.zero_grads()


def lr_schedule(step: int, base_lr: float, warmup_steps: int, max_steps: int,
                power: float = 0.5) -> float:
    """Linear warmup to ``base_lr`` then polynomial decay to 0 at ``max_steps``.

    warmup_steps may equal max_steps, in which case the run is pure ramp.
    Steps beyond max_steps clamp to 0 with a warning.
    """
    if step < 0:
        raise ContractError("step must be non-negative")
    if warmup_steps > max_steps:
        raise ContractError("warmup_steps must not exceed max_steps")
    if step > max_steps:
        warnings.warn(f"lr_schedule: step {step} beyond max_steps {max_steps}, clamping to 0")
        return 0.0
    if step <= warmup_steps:
        if warmup_steps == 0:
            return base_lr
        return base_lr * step / warmup_steps
    frac = (max_steps - step) / (max_steps - warmup_steps)
    return base_lr * frac ** power
