"""Adam with a warmup then inverse-square-root learning-rate decay."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .params import ParameterStore


@dataclass
class AdamState:
    base_lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    warmup_steps: int = 100
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def schedule(self) -> dict:
        return {
            "base_lr": self.base_lr,
            "warmup_steps": self.warmup_steps,
            "decay": "inverse_sqrt",
            "step_count": self.step_count,
        }


def schedule_scale(step: int, warmup_steps: int) -> float:
    """Linear warmup to 1.0, then 1/sqrt decay; scale is min of the two."""
    if step < 1:
        raise ValueError("schedule_scale: step counts from 1")
    w = max(1, warmup_steps)
    return min(step / w, math.sqrt(w / step))


def adam_step(params: ParameterStore, grads: dict, state: AdamState) -> float:
    """Apply one Adam update in place; returns the learning rate used.

    grads must cover every parameter in the store; a NaN in any gradient
    aborts with the offending parameter named.
    """
    missing = [name for name in params.names() if name not in grads]
    if missing:
        raise ValueError(f"adam_step: missing gradients for {missing}")
    for name in params.names():
        if np.isnan(grads[name]).any():
            raise ValueError(f"adam_step: NaN gradient for parameter '{name}'")

    state.step_count += 1
    lr = state.base_lr * schedule_scale(state.step_count, state.warmup_steps)
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1**state.step_count
    bias2 = 1.0 - b2**state.step_count
    for name, tensor in params.items():
        g = grads[name]
        if g.shape != tensor.shape:
            raise ValueError(f"adam_step: gradient shape {g.shape} != parameter '{name}' shape {tensor.shape}")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(tensor.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(tensor.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / bias1) / (np.sqrt(v / bias2) + state.eps)
        tensor.data = tensor.data - lr * update
    return lr
