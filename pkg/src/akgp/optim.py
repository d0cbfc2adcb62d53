"""Adam with bias correction over the model's named tensors.

Frozen tensors (requires_grad False) are skipped entirely: no update, no
moment decay, bit-identical before and after. Gradients of stepped tensors
are zeroed once consumed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class OptimizerError(RuntimeError):
    """A trainable tensor is missing its gradient buffer."""


@dataclass
class AdamState:
    """First/second moment buffers keyed by qualified tensor name."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(model, state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One in-place update over every trainable tensor of the model."""
    state.t += 1
    correction1 = 1.0 - beta1 ** state.t
    correction2 = 1.0 - beta2 ** state.t
    for name, tensor in model.named_tensors():
        if not tensor.requires_grad:
            continue
        if tensor.grad is None:
            raise OptimizerError(f"trainable tensor {name} has no gradient buffer")
        g = tensor.grad
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(tensor.data)
            state.v[name] = np.zeros_like(tensor.data)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        tensor.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
        tensor.zero_grad()
