from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import Param


@dataclass
class SgdmState:
    learning_rate: float
    momentum: float = 0.9
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning rate must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")


def sgdm_step(params: dict[str, Param], state: SgdmState) -> None:
    """Classical momentum: ``v <- mu v + g``; ``theta <- theta - lr v``.

    All gradients are checked before any parameter moves, so a non-finite
    gradient leaves parameters and velocities untouched.
    """
    for name, p in params.items():
        if not np.all(np.isfinite(p.grad)):
            raise FloatingPointError(f"non-finite gradient in {name}; step rejected")
        if p.grad.shape != p.data.shape:
            raise ValueError(f"gradient shape {p.grad.shape} != parameter shape {p.data.shape} for {name}")
    for name, p in params.items():
        v = state.velocity.get(name)
        if v is None:
            v = state.velocity[name] = np.zeros_like(p.data)
        v *= state.momentum
        v += p.grad
        p.data -= (state.learning_rate * v).astype(p.data.dtype, copy=False)


class SGDM:
    def __init__(self, params: dict[str, Param], lr: float = 0.01, momentum: float = 0.9):
        self.params = params
        self.state = SgdmState(lr, momentum)

    def step(self) -> None:
        sgdm_step(self.params, self.state)
