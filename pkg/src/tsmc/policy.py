"""Feedforward feedback policies with exact Jacobians for the adjoint pass.

Parameters are stored flat, layer by layer: the weight matrix in row-major
order (``out x in``), followed by the bias when the layer has one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import StateEmbedding
from .rollout import group_size, squash

ACTIVATIONS = ("tanh", "identity")


def _activate(z, kind):
    if kind == "tanh":
        a = np.tanh(z)
        return a, 1.0 - a * a
    return z, np.ones_like(z)


@dataclass
class MlpPolicy:
    """``u = u_max * tanh(W_k h_{k-1} + b_k)`` with ``h_i = act(W_i h_{i-1} + b_i)``.

    ``layer_sizes`` runs from the network input width to the control width.
    With an ``embedding`` the network sees ``embedding(x)`` instead of ``x``.
    ``u_max=None`` leaves the output unsquashed.
    """

    layer_sizes: tuple[int, ...]
    u_max: float | None = None
    activation: str = "tanh"
    output_bias: bool = True
    embedding: StateEmbedding | None = None
    output_squash: str = "tanh"

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValueError("need at least input and output widths, all positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.embedding is not None and self.embedding.feature_dim != self.layer_sizes[0]:
            raise ValueError("embedding width does not match the first layer")
        self._layout = []
        offset = 0
        n_layers = len(self.layer_sizes) - 1
        for i, (n_in, n_out) in enumerate(zip(self.layer_sizes[:-1], self.layer_sizes[1:])):
            has_bias = self.output_bias or i < n_layers - 1
            w_end = offset + n_out * n_in
            b_end = w_end + (n_out if has_bias else 0)
            self._layout.append((n_in, n_out, offset, w_end, b_end if has_bias else None))
            offset = b_end
        self._param_dim = offset

    @property
    def param_dim(self) -> int:
        return self._param_dim

    @property
    def control_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def state_dim(self) -> int:
        return self.embedding.state_dim if self.embedding is not None else self.layer_sizes[0]

    def _check(self, theta):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        if theta.shape[1] != self.param_dim:
            raise ValueError(f"parameter vector has length {theta.shape[1]}, expected {self.param_dim}")
        return theta

    def unflatten(self, theta):
        """Per-layer ``(W (R, out, in), b (R, out) or None)`` views."""
        theta = self._check(theta)
        r = len(theta)
        layers = []
        for n_in, n_out, start, w_end, b_end in self._layout:
            W = theta[:, start:w_end].reshape(r, n_out, n_in)
            b = theta[:, w_end:b_end] if b_end is not None else None
            layers.append((W, b))
        return layers

    def flatten(self, layers) -> np.ndarray:
        parts = []
        for W, b in layers:
            parts.append(W.reshape(len(W), -1))
            if b is not None:
                parts.append(b)
        return np.concatenate(parts, axis=1)

    def _forward(self, theta, x):
        layers = self.unflatten(theta)
        x = np.atleast_2d(x)
        n, k = len(layers[0][0]), group_size(layers[0][0], x)
        h = self.embedding(x) if self.embedding is not None else x
        h = h.reshape(n, k, -1)
        inputs, slopes = [], []
        for i, (W, b) in enumerate(layers):
            inputs.append(h)
            z = np.matmul(h, W.transpose(0, 2, 1))
            if b is not None:
                z = z + b[:, None, :]
            if i < len(layers) - 1:
                h, s = _activate(z, self.activation)
            else:
                h, s = squash(z, self.u_max, self.output_squash)
            slopes.append(s)
        return h.reshape(n * k, -1), (layers, inputs, slopes, x)

    def act(self, theta, t, x):
        return self._forward(theta, x)[0]

    def vjp(self, theta, t, x, g):
        """Backpropagate a control cotangent; returns ``L^T g`` per state and
        ``G^T g`` summed over each parameter row's states."""
        _, (layers, inputs, slopes, x) = self._forward(theta, x)
        n, k = inputs[0].shape[:2]
        grad = np.empty((n, self.param_dim))
        delta = g.reshape(n, k, -1) * slopes[-1]
        for i in range(len(layers) - 1, -1, -1):
            W, b = layers[i]
            _, _, start, w_end, b_end = self._layout[i]
            grad[:, start:w_end] = np.matmul(delta.transpose(0, 2, 1), inputs[i]).reshape(n, -1)
            if b_end is not None:
                grad[:, w_end:b_end] = delta.sum(axis=1)
            delta = np.matmul(delta, W)
            if i > 0:
                delta = delta * slopes[i - 1]
        delta = delta.reshape(n * k, -1)
        if self.embedding is not None:
            delta = self.embedding.vjp(x, delta)
        return delta, grad

    def jacobians(self, theta, t, x):
        """Full ``L = du/dx`` (R, m, n) and ``G = du/dtheta`` (R, m, d), one row per state."""
        x = np.atleast_2d(x)
        theta = self._check(theta)
        theta = np.repeat(theta, group_size(theta, x), axis=0)
        r, m = len(x), self.control_dim
        L = np.empty((r, m, x.shape[1]))
        G = np.empty((r, m, self.param_dim))
        for j in range(m):
            e = np.zeros((r, m))
            e[:, j] = 1.0
            L[:, j], G[:, j] = self.vjp(theta, t, x, e)
        return L, G


def policy_forward(policy: MlpPolicy, theta, x) -> np.ndarray:
    """Control for a single parameter vector and state."""
    return policy.act(np.asarray(theta, float)[None], 0, np.asarray(x, float)[None])[0]


def policy_jacobians(policy: MlpPolicy, theta, x) -> tuple[np.ndarray, np.ndarray]:
    L, G = policy.jacobians(np.asarray(theta, float)[None], 0, np.asarray(x, float)[None])
    return L[0], G[0]
