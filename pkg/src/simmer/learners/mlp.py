"""Small tanh MLPs with hand-written backprop, plus an Adam step rule.

Parameters are kept as a flat list of arrays ``[W0, b0, W1, b1, ...]`` so that
optimizers and finite-difference checks can treat them uniformly.
"""

from __future__ import annotations

import numpy as np


def init_mlp(sizes, rng: np.random.Generator, out_scale: float = 1.0) -> list[np.ndarray]:
    """Orthogonal init; hidden layers gain sqrt(2), output layer ``out_scale``."""
    params = []
    n_layers = len(sizes) - 1
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = out_scale if i == n_layers - 1 else np.sqrt(2.0)
        a = rng.standard_normal((max(fan_in, fan_out), min(fan_in, fan_out)))
        q, r = np.linalg.qr(a)
        q = q * np.sign(np.diag(r))
        w = q if fan_in >= fan_out else q.T
        params.append(gain * w[:fan_in, :fan_out].copy())
        params.append(np.zeros(fan_out))
    return params


def mlp_forward(params, x):
    """Returns the output and the per-layer activations needed for backprop."""
    acts = [x]
    h = x
    n_layers = len(params) // 2
    for i in range(n_layers):
        h = h @ params[2 * i] + params[2 * i + 1]
        if i < n_layers - 1:
            h = np.tanh(h)
        acts.append(h)
    return h, acts


def mlp_backward(params, acts, grad_out):
    """Gradients of ``sum(grad_out * output)`` w.r.t. every parameter."""
    grads = [None] * len(params)
    n_layers = len(params) // 2
    g = grad_out
    for i in reversed(range(n_layers)):
        grads[2 * i] = acts[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        if i > 0:
            g = (g @ params[2 * i].T) * (1.0 - acts[i] ** 2)
    return grads


class Adam:
    def __init__(self, params, lr=3e-4, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        """In-place descent step."""
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_grad_norm(grads, max_norm):
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm is not None and total > max_norm:
        scale = max_norm / (total + 1e-12)
        grads = [g * scale for g in grads]
    return grads, total
