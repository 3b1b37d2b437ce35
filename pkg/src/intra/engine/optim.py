"""Adam optimizer with bias correction."""

import numpy as np

from .tensor import ShapeError, Tensor

__all__ = ["AdamState", "Adam", "adam_step"]


class AdamState:
    """Per-parameter first/second moments plus the shared step counter."""

    def __init__(self, shapes, dtype, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = {k: np.zeros(s, dtype=dtype) for k, s in shapes.items()}
        self.v = {k: np.zeros(s, dtype=dtype) for k, s in shapes.items()}


def adam_step(params, grads, state):
    """One bias-corrected Adam update, in place on the parameter tensors.

    ``params`` maps names to tensors, ``grads`` maps the same names to
    gradient arrays. Returns ``state`` with its step counter advanced.
    """
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise ShapeError(
                f"adam_step: gradient shape {g.shape} does not match "
                f"parameter '{name}' shape {p.data.shape}"
            )
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.data = p.data - state.lr * update
    return state


class Adam:
    """Convenience wrapper binding an :class:`AdamState` to a parameter set."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(params)
        for name, p in self.params.items():
            if not isinstance(p, Tensor):
                raise TypeError(f"parameter '{name}' is not a Tensor")
        shapes = {k: p.data.shape for k, p in self.params.items()}
        dtype = next(iter(self.params.values())).data.dtype if self.params else np.float32
        self.state = AdamState(shapes, dtype, lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self, grads):
        """Apply one update from a name -> gradient array mapping."""
        adam_step(self.params, grads, self.state)
