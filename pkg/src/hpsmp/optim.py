"""Adam with bias correction, operating in place on parameter tensors."""

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from .autodiff import Tensor


@dataclass
class AdamState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_update(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float = 0.001,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """Apply one Adam step to every parameter that has a gradient.

    ``state.step`` is incremented first, so the first call uses step 1 in the
    bias corrections.  Returns ``(params, state)``.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state.m[name], state.v[name] = m, v
        if lr != 0.0:
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state
