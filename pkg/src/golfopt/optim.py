"""Adam with bias correction and the exponential learning-rate decay."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def arrays(self) -> dict[str, np.ndarray]:
        out = {f"adam.m.{k}": a for k, a in self.m.items()}
        out.update({f"adam.v.{k}": a for k, a in self.v.items()})
        return out

    def meta(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps, "step": self.step}

    @classmethod
    def restore(cls, meta: dict, arrays: dict[str, np.ndarray]) -> AdamState:
        state = cls(**meta)
        for key, arr in arrays.items():
            if key.startswith("adam.m."):
                state.m[key[len("adam.m."):]] = arr.copy()
            elif key.startswith("adam.v."):
                state.v[key[len("adam.v."):]] = arr.copy()
        return state


def adam_step(state: AdamState, params: dict[str, Tensor], grads: dict[str, np.ndarray] | None = None) -> None:
    """One in-place update of every parameter in ``params``.

    ``grads`` defaults to each parameter's accumulated ``.grad``; the gradients
    themselves are left untouched.
    """
    if grads is None:
        grads = {name: p.grad for name, p in params.items()}
    for name in params:
        if grads.get(name) is None:
            raise ValueError(f"missing gradient for parameter {name!r}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        p.data = p.data - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def lr_at(step: int, total: int, lr0: float = 1e-3, gamma: float = 0.3, decades: float = 11.0) -> float:
    """``lr0 * gamma ** (decades * step / total)``: decays from lr0 to lr0 * gamma**11."""
    if total <= 0:
        return lr0
    if not 0 <= step <= total:
        raise ValueError(f"step {step} outside [0, {total}]")
    return lr0 * gamma ** (decades * step / total)
