"""
Adagrad optimizer. Each trainable tensor owns an accumulator G of squared
gradients:

    G += g * g
    theta -= lr * g / (sqrt(G) + eps)

Updates happen in place so layers keep referencing the same arrays.
"""

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from core.errors import ShapeError
from core.tensor import Tensor


@dataclass
class AdagradState:
    accumulator: Tensor

    @classmethod
    def zeros_like(cls, param: Tensor) -> "AdagradState":
        return cls(np.zeros_like(param))


def adagrad_step(param: Tensor, grad: Tensor, state: AdagradState, lr: float, eps: float):
    if param.shape != grad.shape or param.shape != state.accumulator.shape:
        raise ShapeError(f"adagrad shapes differ: param {list(param.shape)}, grad {list(grad.shape)}, "
                         f"accumulator {list(state.accumulator.shape)}")
    state.accumulator += grad * grad
    denom = np.sqrt(state.accumulator) + eps
    # G == 0 with eps == 0 only happens where every gradient so far was zero
    step = np.divide(grad, denom, out=np.zeros_like(grad), where=denom > 0)
    param -= lr * step


@dataclass
class Adagrad:
    learning_rate: float = 0.01
    epsilon: float = 1e-7
    states: Dict[str, AdagradState] = field(default_factory=dict)

    def state_for(self, name: str, param: Tensor) -> AdagradState:
        if name not in self.states:
            self.states[name] = AdagradState.zeros_like(param)
        return self.states[name]

    def step(self, params: Dict[str, Tensor], grads: Dict[str, Tensor]):
        """Update every named parameter that has a gradient, in sorted name order"""
        for name in sorted(grads):
            adagrad_step(params[name], grads[name], self.state_for(name, params[name]),
                         self.learning_rate, self.epsilon)
