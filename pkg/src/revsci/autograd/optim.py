from dataclasses import dataclass

import numpy as np

BASE_LR = 2e-4


def lr_schedule(epoch, lr0=BASE_LR, decay=0.9, every=10):
    """Step decay: ``lr0 * decay ** (epoch // every)``."""
    return lr0 * decay ** (epoch // every)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, param):
        return cls(np.zeros_like(param), np.zeros_like(param), 0)


def adam_step(param, grad, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update. Returns ``(new_param, new_state)``; inputs are not modified."""
    t = state.t + 1
    m = beta1 * state.m + (1 - beta1) * grad
    v = beta2 * state.v + (1 - beta2) * grad * grad
    m_hat = m / (1 - beta1 ** t)
    v_hat = v / (1 - beta2 ** t)
    new = param - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new.astype(param.dtype, copy=False), AdamState(m, v, t)


class Adam:
    """Adam over a network's named parameters, updating them in place."""

    def __init__(self, lr=BASE_LR, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state = {}

    def step(self, named_params, grads, lr=None):
        lr = self.lr if lr is None else lr
        for name, p in named_params:
            state = self.state.get(name) or AdamState.zeros_like(p)
            new, self.state[name] = adam_step(p, grads[name], state, lr, self.beta1, self.beta2, self.eps)
            p[...] = new
