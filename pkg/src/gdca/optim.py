"""Adam with bias correction over named parameter maps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .tensor import Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def state_tensors(self, prefix: str) -> dict[str, Tensor]:
        """Moments as named tensors, for checkpointing."""
        out = {}
        for name in self.m:
            out[f"{prefix}m.{name}"] = Tensor(self.m[name])
            out[f"{prefix}v.{name}"] = Tensor(self.v[name])
        return out

    def load_state_tensors(self, tensors: dict[str, Tensor], prefix: str, t: int):
        self.t = int(t)
        self.m.clear()
        self.v.clear()
        for key, val in tensors.items():
            if key.startswith(prefix + "m."):
                self.m[key[len(prefix) + 2:]] = val.numpy()
            elif key.startswith(prefix + "v."):
                self.v[key[len(prefix) + 2:]] = val.numpy()


def adam_step(state: AdamState, params: dict[str, Tensor]):
    """Apply one Adam update to every parameter in ``params`` using its ``.grad``."""
    for name, p in params.items():
        if p.grad is None:
            raise ContractError(f"parameter {name!r} has no gradient")
        if p.grad.shape != p.shape:
            raise ContractError(f"gradient shape {p.grad.shape} != parameter shape {p.shape} for {name!r}")
    state.t += 1
    t = state.t
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = p.grad.astype(p.dtype, copy=False)
        dt = p.dtype.type
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros(p.shape, dtype=p.dtype)
            v = np.zeros(p.shape, dtype=p.dtype)
        m = dt(b1) * m + dt(1.0 - b1) * g
        v = dt(b2) * v + dt(1.0 - b2) * (g * g)
        m_hat = m / dt(c1)
        v_hat = v / dt(c2)
        p.data = p.data - dt(state.lr) * m_hat / (np.sqrt(v_hat) + dt(state.eps))
        state.m[name] = m
        state.v[name] = v
