"""Adam with bias correction, written functionally over named tensors."""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import torch


@dataclass
class AdamState:
    m: "OrderedDict[str, torch.Tensor]"
    v: "OrderedDict[str, torch.Tensor]"
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        z = lambda: OrderedDict((k, torch.zeros_like(p.detach())) for k, p in params.items())
        return cls(z(), z(), 0)


def adam_step(params, grads, moments: AdamState, t: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update at step index ``t >= 1``.

    Returns ``(new_params, new_moments)``; inputs are left untouched.
    """
    if t < 1:
        raise ValueError(f"Adam step index must be >= 1, got {t}")
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    new_p, new_m, new_v = OrderedDict(), OrderedDict(), OrderedDict()
    with torch.no_grad():
        for k, p in params.items():
            g = grads[k]
            m = beta1 * moments.m[k] + (1.0 - beta1) * g
            v = beta2 * moments.v[k] + (1.0 - beta2) * g * g
            new_p[k] = p.detach() - lr * (m / c1) / ((v / c2).sqrt() + eps)
            new_m[k], new_v[k] = m, v
    return new_p, AdamState(new_m, new_v, t)
