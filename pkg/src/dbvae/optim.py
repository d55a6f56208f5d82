"""Adam optimizer over parameter tensors.

State is kept per parameter (first/second moment arrays) plus a shared step
counter; updates rebind ``Tensor.data`` so live graphs from earlier steps are
never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .tape import Tensor


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0


def adam_init(params: Sequence[Tensor]) -> AdamState:
    return AdamState(m=[np.zeros_like(p.data) for p in params],
                     v=[np.zeros_like(p.data) for p in params])


def adam_step(params: Sequence[Tensor], grads: Mapping[Tensor, np.ndarray],
              state: AdamState, lr: float = 5e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, in place.

    Raises ValueError naming the parameter if its gradient is non-finite.
    """
    if len(state.m) != len(params):
        raise ValueError(f"adam_step: state tracks {len(state.m)} params, got {len(params)}")
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    sqrt_c2 = np.sqrt(1.0 - beta2 ** t)
    # lr * (m/c1) / (sqrt(v/c2) + eps) == scale * m / (sqrt(v) + eps*sqrt(c2))
    step_scale = lr * sqrt_c2 / c1
    for i, p in enumerate(params):
        g = grads[p]
        if g.shape != p.data.shape:
            raise ValueError(
                f"adam_step: gradient shape {g.shape} != parameter shape {p.data.shape}"
                f" for {p.name or f'param {i}'}")
        if not np.all(np.isfinite(g)):
            raise ValueError(f"adam_step: non-finite gradient for {p.name or f'param {i}'}")
        m, v = state.m[i], state.v[i]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        denom = np.asarray(np.sqrt(v))  # asarray: sqrt of a 0-d array is a scalar
        denom += eps * sqrt_c2
        np.divide(m, denom, out=denom)
        denom *= step_scale
        p.data = p.data - denom
