"""A two-layer perceptron with hand-written gradients.

All trainable heads in this package (toy affordance head, residual policy
encoder/decoder, ablation heads) share this core so the backward pass is
written and finite-difference-checked once. Training uses Adam with a cosine
learning-rate schedule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MLP:
    """y = W2 @ tanh(W1 @ x + b1) + b2, batched over the leading axis."""

    w1: np.ndarray  # (hidden, in)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (out, hidden)
    b2: np.ndarray  # (out,)

    @staticmethod
    def init(in_dim: int, hidden: int, out_dim: int, rng: np.random.Generator) -> "MLP":
        return MLP(
            w1=rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(hidden, in_dim)),
            b1=np.zeros(hidden),
            w2=rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(out_dim, hidden)),
            b2=np.zeros(out_dim),
        )

    @property
    def params(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, tuple]:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        a = np.tanh(x @ self.w1.T + self.b1)
        y = a @ self.w2.T + self.b2
        return y, (x, a)

    def backward(self, cache: tuple, dy: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Given dL/dy, return (dL/dx, [dW1, db1, dW2, db2])."""
        x, a = cache
        dy = np.atleast_2d(dy)
        dw2 = dy.T @ a
        db2 = dy.sum(axis=0)
        dh = (dy @ self.w2) * (1.0 - a * a)
        dw1 = dh.T @ x
        db1 = dh.sum(axis=0)
        dx = dh @ self.w1
        return dx, [dw1, db1, dw2, db2]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("w1", "b1", "w2", "b2")}

    @staticmethod
    def from_dict(doc: dict) -> "MLP":
        return MLP(**{k: np.array(doc[k], dtype=np.float64) for k in ("w1", "b1", "w2", "b2")})


class Adam:
    """Standard Adam on a list of parameter arrays, updated in place."""

    def __init__(self, params: list[np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray],
             lr_scale: float = 1.0) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= (self.lr * lr_scale) * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def cosine_lr(epoch: int, total_epochs: int) -> float:
    """Cosine decay factor in (0, 1], 1 at epoch 0."""
    return 0.5 * (1.0 + float(np.cos(np.pi * epoch / max(total_epochs, 1))))


def monotone_step(
    opt: Adam,
    params: list[np.ndarray],
    grads: list[np.ndarray],
    loss_fn,
    current_loss: float,
    lr_scale: float,
    max_backtracks: int = 8,
) -> None:
    """Adam step with backtracking so the full-batch loss never increases.

    If even the smallest trial step raises the loss (Adam's momentum can
    briefly point uphill), the parameters are left unchanged for this epoch
    while the moment estimates keep evolving.
    """
    saved_p = [p.copy() for p in params]
    saved_m = [m.copy() for m in opt.m]
    saved_v = [v.copy() for v in opt.v]
    saved_t = opt.t
    scale = lr_scale
    for attempt in range(max_backtracks):
        opt.step(params, grads, lr_scale=scale)
        if loss_fn() <= current_loss + 1e-12:
            return
        for p, s in zip(params, saved_p):
            p[...] = s
        if attempt == max_backtracks - 1:
            # Keep the first attempt's moment update so the state can escape.
            return
        opt.m = [m.copy() for m in saved_m]
        opt.v = [v.copy() for v in saved_v]
        opt.t = saved_t
        scale *= 0.5
