"""Adam optimizer over named parameter dictionaries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionError


@dataclass
class AdamState:
    """First/second moment buffers per parameter name plus the step counter."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    frozen: set[str] | frozenset[str] = frozenset(),
) -> None:
    """
    One bias-corrected Adam update, in place.

    Parameters without a gradient or listed in ``frozen`` are left untouched;
    the step counter advances regardless.
    """
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    step_size = state.lr / bc1

    for name, param in params.items():
        if name in frozen or name not in grads:
            continue
        g = grads[name]
        if g.shape != param.shape:
            raise DimensionError(f"Gradient for '{name}' has shape {g.shape}, expected {param.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        denom = np.sqrt(v * (1.0 / bc2)) + state.eps
        param -= (step_size * m / denom).astype(param.dtype, copy=False)


class Adam:
    """Adam bound to one parameter dictionary."""

    def __init__(
        self,
        params: dict[str, np.ndarray],
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        frozen: set[str] | frozenset[str] = frozenset(),
    ) -> None:
        self.params = params
        self.frozen = frozenset(frozen)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self, grads: dict[str, np.ndarray]) -> None:
        adam_step(self.params, grads, self.state, self.frozen)
