"""
PerturbKit Optim - Functional Adam.

`adam_step` never mutates its inputs; it returns new parameter and state
dicts, so two optimizers fed identical inputs follow identical trajectories.
"""

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from models.autodiff import ShapeError


Arrays = Dict[str, np.ndarray]


@dataclass(frozen=True)
class AdamState:
    """First/second moment estimates and the step counter."""

    step: int = 0
    m: Arrays = field(default_factory=dict)
    v: Arrays = field(default_factory=dict)


def adam_step(
    params: Arrays,
    grads: Arrays,
    state: AdamState,
    lr: float = 1e-3,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> Tuple[Arrays, AdamState]:
    """
    One bias-corrected Adam update.

        m  = b1 m + (1 - b1) g          m̂ = m / (1 - b1^t)
        v  = b2 v + (1 - b2) g²         v̂ = v / (1 - b2^t)
        p -= lr · m̂ / (sqrt(v̂) + eps)

    Args:
        params: name -> array
        grads: name -> gradient (same names and shapes as params)
        state: Previous state (AdamState() to start)
        lr: Learning rate
        betas: (b1, b2)
        eps: Denominator epsilon

    Returns:
        (new params, new state)

    Raises:
        ShapeError: If names or shapes of params and grads disagree
    """
    if set(params) != set(grads):
        raise ShapeError(f"Gradient names differ from parameters: {sorted(set(params) ^ set(grads))}")
    b1, b2 = betas
    t = state.step + 1
    new_params: Arrays = {}
    new_m: Arrays = {}
    new_v: Arrays = {}
    for name, value in params.items():
        g = grads[name]
        if g.shape != value.shape:
            raise ShapeError(f"{name}: gradient shape {g.shape} != parameter shape {value.shape}")
        m = b1 * state.m.get(name, 0.0) + (1.0 - b1) * g
        v = b2 * state.v.get(name, 0.0) + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_params[name] = value - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(step=t, m=new_m, v=new_v)
