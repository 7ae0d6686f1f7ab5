"""Cost models: quadratic in state features, and the sparse terminal cost."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..features import StateEmbedding

GOAL_RADIUS = 0.1
GOAL_SHARPNESS = 0.02


@dataclass
class FeatureQuadraticCost:
    """``sum_t |phi(x_t) - phi(g)|_Q^2 + |u_t|_R^2 + |phi(x_T) - phi(g)|_Qf^2``
    with diagonal weights."""

    embedding: StateEmbedding
    goal: np.ndarray
    state_weights: np.ndarray
    control_weights: np.ndarray
    terminal_weights: np.ndarray

    def __post_init__(self):
        k = self.embedding.feature_dim
        self.goal = np.asarray(self.goal, dtype=float)
        self._goal_features = self.embedding(self.goal[None])[0]
        self.state_weights = np.broadcast_to(np.asarray(self.state_weights, float), (k,)).copy()
        self.terminal_weights = np.broadcast_to(np.asarray(self.terminal_weights, float), (k,)).copy()
        self.control_weights = np.atleast_1d(np.asarray(self.control_weights, float))
        if min(self.state_weights.min(), self.terminal_weights.min(), self.control_weights.min()) < 0:
            raise ValueError("cost weights must be nonnegative")

    def _err(self, x):
        return self.embedding(x) - self._goal_features

    def stage(self, t, x, u):
        e = self._err(x)
        return np.sum(self.state_weights * e * e, axis=1) + np.sum(self.control_weights * u * u, axis=1)

    def stage_grad(self, t, x, u):
        e = self._err(x)
        return self.embedding.vjp(x, 2.0 * self.state_weights * e), 2.0 * self.control_weights * u

    def terminal(self, x):
        e = self._err(x)
        return np.sum(self.terminal_weights * e * e, axis=1)

    def terminal_grad(self, x):
        return self.embedding.vjp(x, 2.0 * self.terminal_weights * self._err(x))


def sigmoid_goal_cost(dist, radius: float = GOAL_RADIUS, sharpness: float = GOAL_SHARPNESS):
    """``1 - sigmoid((radius - dist) / sharpness)`` and its derivative in ``dist``."""
    value = expit((np.asarray(dist, dtype=float) - radius) / sharpness)
    return value, value * (1.0 - value) / sharpness


def _norm_and_unit(v):
    n = np.sqrt(np.sum(v * v, axis=1))
    safe = np.where(n > 0, n, 1.0)
    return n, np.where(n[:, None] > 0, v / safe[:, None], 0.0)


@dataclass
class FeatureKeypoints:
    """Position and velocity read off selected state coordinates (angles
    through their ``(cos, sin)`` features)."""

    embedding: StateEmbedding
    position_indices: tuple[int, ...]
    velocity_indices: tuple[int, ...]

    def __post_init__(self):
        self._pos = self.embedding.feature_indices(self.position_indices)
        self._vel = self.embedding.feature_indices(self.velocity_indices)

    def __call__(self, x):
        phi = self.embedding(x)
        return phi[:, self._pos], phi[:, self._vel]

    def jacobian(self, x):
        J = self.embedding.jacobian(x)
        return J[:, self._pos], J[:, self._vel]


@dataclass
class PendulumTipKeypoints:
    """Cartesian tip position and velocity of a pendulum ``(angle, rate)``."""

    length: float = 1.0

    def __call__(self, x):
        x = np.atleast_2d(x)
        s, c, w = np.sin(x[:, 0]), np.cos(x[:, 0]), x[:, 1]
        pos = self.length * np.stack([s, -c], axis=1)
        vel = self.length * w[:, None] * np.stack([c, s], axis=1)
        return pos, vel

    def jacobian(self, x):
        x = np.atleast_2d(x)
        s, c, w = np.sin(x[:, 0]), np.cos(x[:, 0]), x[:, 1]
        l = self.length
        Jp = np.zeros((len(x), 2, 2))
        Jp[:, 0, 0], Jp[:, 1, 0] = l * c, l * s
        Jv = np.empty((len(x), 2, 2))
        Jv[:, 0, 0], Jv[:, 0, 1] = -l * w * s, l * c
        Jv[:, 1, 0], Jv[:, 1, 1] = l * w * c, l * s
        return Jp, Jv


@dataclass
class SparseTerminalCost:
    """Terminal-only cost in ``(0, 1)`` that is small only near the goal.

    ``dist = |pos - pos_goal| + 0.5 |vel - vel_goal|`` where ``keypoints``
    maps a state to its position and velocity vectors.
    """

    keypoints: FeatureKeypoints | PendulumTipKeypoints
    goal: np.ndarray
    radius: float = GOAL_RADIUS
    sharpness: float = GOAL_SHARPNESS

    def __post_init__(self):
        self.goal = np.asarray(self.goal, dtype=float)
        pos, vel = self.keypoints(self.goal[None])
        self._goal_pos, self._goal_vel = pos[0], vel[0]

    def distance(self, x):
        pos, vel = self.keypoints(x)
        dp, up = _norm_and_unit(pos - self._goal_pos)
        dv, uv = _norm_and_unit(vel - self._goal_vel)
        return dp + 0.5 * dv, up, uv

    def stage(self, t, x, u):
        return np.zeros(len(x))

    def stage_grad(self, t, x, u):
        return np.zeros_like(x), np.zeros_like(u)

    def terminal(self, x):
        return sigmoid_goal_cost(self.distance(x)[0], self.radius, self.sharpness)[0]

    def terminal_grad(self, x):
        dist, up, uv = self.distance(x)
        _, slope = sigmoid_goal_cost(dist, self.radius, self.sharpness)
        Jp, Jv = self.keypoints.jacobian(x)
        g = np.einsum("rk,rkn->rn", up, Jp) + 0.5 * np.einsum("rk,rkn->rn", uv, Jv)
        return slope[:, None] * g


def sparse_terminal_cost(x_T, goal, keypoints=None):
    """Value and state gradient of the sparse goal cost for one final state."""
    cost = SparseTerminalCost(keypoints or PendulumTipKeypoints(), goal)
    x = np.asarray(x_T, dtype=float)[None]
    return float(cost.terminal(x)[0]), cost.terminal_grad(x)[0]
