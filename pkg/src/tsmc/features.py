"""Smooth state features: angles become ``(cos, sin)`` pairs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class StateEmbedding:
    state_dim: int
    angle_indices: tuple[int, ...] = ()
    _slots: list = field(init=False, repr=False)

    def __post_init__(self):
        self.angle_indices = tuple(int(i) for i in self.angle_indices)
        slots, k = [], 0
        for i in range(self.state_dim):
            width = 2 if i in self.angle_indices else 1
            slots.append(list(range(k, k + width)))
            k += width
        self._slots = slots

    @property
    def feature_dim(self) -> int:
        return self.state_dim + len(self.angle_indices)

    def feature_indices(self, state_indices) -> list[int]:
        """Feature columns that encode the given state coordinates."""
        return [j for i in state_indices for j in self._slots[i]]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        cols = []
        for i in range(self.state_dim):
            if i in self.angle_indices:
                cols += [np.cos(x[:, i]), np.sin(x[:, i])]
            else:
                cols.append(x[:, i])
        return np.stack(cols, axis=1)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        J = np.zeros((len(x), self.feature_dim, self.state_dim))
        for i, slot in enumerate(self._slots):
            if i in self.angle_indices:
                J[:, slot[0], i] = -np.sin(x[:, i])
                J[:, slot[1], i] = np.cos(x[:, i])
            else:
                J[:, slot[0], i] = 1.0
        return J

    def vjp(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        """``J(x)^T g`` without forming the Jacobian."""
        x = np.atleast_2d(x)
        out = np.empty((len(x), self.state_dim))
        for i, slot in enumerate(self._slots):
            if i in self.angle_indices:
                out[:, i] = -np.sin(x[:, i]) * g[:, slot[0]] + np.cos(x[:, i]) * g[:, slot[1]]
            else:
                out[:, i] = g[:, slot[0]]
        return out
