"""Adam optimizer over named parameter maps.

Functional style: an update returns a fresh (state, params) pair and never
mutates its inputs, which keeps training steps replayable and checkpoints
bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import (
    DEFAULT_ADAM_EPS,
    DEFAULT_BETA1,
    DEFAULT_BETA2,
    DEFAULT_LEARNING_RATE,
)
from .errors import ShapeError


@dataclass(frozen=True)
class OptimizerState:
    """First/second moment accumulators plus the shared step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int
    learning_rate: float = DEFAULT_LEARNING_RATE
    beta1: float = DEFAULT_BETA1
    beta2: float = DEFAULT_BETA2
    epsilon: float = DEFAULT_ADAM_EPS


def init_optimizer(
    params: dict[str, np.ndarray],
    learning_rate: float = DEFAULT_LEARNING_RATE,
    beta1: float = DEFAULT_BETA1,
    beta2: float = DEFAULT_BETA2,
    epsilon: float = DEFAULT_ADAM_EPS,
) -> OptimizerState:
    return OptimizerState(
        m={k: np.zeros_like(v) for k, v in params.items()},
        v={k: np.zeros_like(v) for k, v in params.items()},
        step=0,
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def adam_update(
    state: OptimizerState,
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
) -> tuple[OptimizerState, dict[str, np.ndarray]]:
    """One bias-corrected adaptive-moment step over every named parameter."""
    if set(grads) != set(params):
        missing = set(params) ^ set(grads)
        raise ShapeError(f"gradient keys do not match parameters: {sorted(missing)}")
    t = state.step + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    new_m, new_v, new_p = {}, {}, {}
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise ShapeError(
                f"gradient shape {g.shape} != parameter shape {p.shape} for {key!r}"
            )
        g = g.astype(p.dtype, copy=False)
        m = state.beta1 * state.m[key] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[key] + (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_p[key] = p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
        new_m[key] = m
        new_v[key] = v
    return (
        OptimizerState(
            m=new_m,
            v=new_v,
            step=t,
            learning_rate=state.learning_rate,
            beta1=state.beta1,
            beta2=state.beta2,
            epsilon=state.epsilon,
        ),
        new_p,
    )
