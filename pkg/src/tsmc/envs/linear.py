"""Linear time-invariant dynamics ``x' = A x + B u``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class LinearDynamics:
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if self.A.shape[0] != self.A.shape[1] or self.B.shape[0] != self.A.shape[0]:
            raise ValueError("A must be square and B must have as many rows as A")

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def control_dim(self) -> int:
        return self.B.shape[1]

    def step(self, x, u):
        return x @ self.A.T + u @ self.B.T

    def jacobians(self, x, u):
        r = len(x)
        return (np.broadcast_to(self.A, (r,) + self.A.shape).copy(),
                np.broadcast_to(self.B, (r,) + self.B.shape).copy())


def scalar_lti(a: float = 0.9, b: float = 1.0) -> LinearDynamics:
    return LinearDynamics([[a]], [[b]])
