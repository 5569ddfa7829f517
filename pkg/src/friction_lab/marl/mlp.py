"""Small fully connected Q-network trained with Adam, numpy only."""

from __future__ import annotations

import numpy as np


class QNetwork:
    """ReLU MLP mapping an observation to one value per action.

    Parameters
    ----------
    n_in, n_out : int
        Observation size and action count.
    hidden : int
        Width of every hidden layer.
    layers : int
        Number of hidden layers.
    lr : float
        Adam step size.
    rng : numpy.random.Generator
        Source for He-normal weight initialisation.
    """

    beta1 = 0.9
    beta2 = 0.999
    adam_eps = 1e-8

    def __init__(self, n_in, n_out, hidden=64, layers=2, lr=1e-3, rng=None):
        rng = np.random.default_rng() if rng is None else rng
        sizes = [n_in] + [hidden] * layers + [n_out]
        self.params = []
        for a, b in zip(sizes[:-1], sizes[1:]):
            self.params.append(rng.standard_normal((a, b)) * np.sqrt(2.0 / a))
            self.params.append(np.zeros(b))
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.lr = lr
        self.t = 0

    def forward(self, x, keep=False):
        h = np.asarray(x, dtype=float)
        acts = [h]
        n_layers = len(self.params) // 2
        for k in range(n_layers):
            h = h @ self.params[2 * k] + self.params[2 * k + 1]
            if k < n_layers - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return (h, acts) if keep else h

    def update(self, x, action, target):
        """One Adam step on 0.5 * (Q(x, action) - target)**2. Returns the TD error."""
        out, acts = self.forward(x, keep=True)
        err = out[action] - target
        grad_out = np.zeros_like(out)
        grad_out[action] = err
        grads = [None] * len(self.params)
        g = grad_out
        for k in range(len(self.params) // 2 - 1, -1, -1):
            grads[2 * k] = np.outer(acts[k], g)
            grads[2 * k + 1] = g
            if k > 0:
                g = (g @ self.params[2 * k].T) * (acts[k] > 0)
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for p, gr, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * gr
            v *= self.beta2
            v += (1 - self.beta2) * gr * gr
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.adam_eps)
        return float(err)
