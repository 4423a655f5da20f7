import numpy as np


class SGD:
    """SGD with Nesterov momentum (no dampening) and L2 weight decay."""

    def __init__(self, params, lr=0.01, momentum=0.9, nesterov=True, weight_decay=0.0):
        self.params = list(params)
        self.lr, self.momentum, self.nesterov, self.weight_decay = lr, momentum, nesterov, weight_decay
        self.velocity = [np.zeros_like(p) for _, _, p, _ in self.params]

    def step(self):
        for (_, _, p, g), v in zip(self.params, self.velocity):
            d = g + self.weight_decay * p if self.weight_decay else g
            v *= self.momentum
            v += d
            upd = d + self.momentum * v if self.nesterov else v
            p -= self.lr * upd


class Adam:
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = list(params)
        self.lr, self.betas, self.eps, self.weight_decay = lr, betas, eps, weight_decay
        self.m = [np.zeros_like(p) for _, _, p, _ in self.params]
        self.v = [np.zeros_like(p) for _, _, p, _ in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        b1, b2 = self.betas
        c1 = 1 - b1**self.t
        c2 = 1 - b2**self.t
        for (_, _, p, g), m, v in zip(self.params, self.m, self.v):
            d = g + self.weight_decay * p if self.weight_decay else g
            m *= b1
            m += (1 - b1) * d
            v *= b2
            v += (1 - b2) * d * d
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def step_decay(base_lr: float, epoch: int, epochs: int) -> float:
    """Divide the rate by 10 at 50% and again at 75% of training."""
    lr = base_lr
    if epoch >= 0.5 * epochs:
        lr /= 10
    if epoch >= 0.75 * epochs:
        lr /= 10
    return lr
