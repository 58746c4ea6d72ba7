"""Adam with bias correction.

``adam_step`` is the whole algorithm; :class:`Adam` only binds it to a
parameter dict so training loops can call ``opt.step()``.
"""

from dataclasses import dataclass, field

import numpy as np

from metagen.core.autodiff.tensor import Tensor
from metagen.core.errors import ShapeMismatchError

VAE_SETTINGS = {"lr": 1e-3, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8}
GAN_SETTINGS = {"lr": 2e-4, "beta1": 0.5, "beta2": 0.999, "eps": 1e-8}


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    v: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {"step": np.array(self.step)}
        out.update({f"m.{name}": value for name, value in self.m.items()})
        out.update({f"v.{name}": value for name, value in self.v.items()})
        return out


def adam_step(params: dict[str, Tensor], state: AdamState) -> None:
    """``θ ← θ - lr * m̂ / (sqrt(v̂) + eps)`` for every parameter that has a gradient."""
    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for name, p in params.items():
        if p.grad is None:
            continue
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        elif m.shape != p.shape:
            raise ShapeMismatchError(f"adam moment {name}", m.shape, p.shape)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * p.grad
        v *= state.beta2
        v += (1.0 - state.beta2) * p.grad**2
        p.data = p.data - state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)


class Adam:
    def __init__(self, params: dict[str, Tensor], **settings):
        self.params = params
        self.state = AdamState(**settings)

    def step(self) -> None:
        adam_step(self.params, self.state)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()
