"""Discretizations with exact step Jacobians.

``RK4Dynamics`` wraps a continuous vector field ``f(x, u)`` that also reports
its Jacobians, and differentiates the four stages by the chain rule, so the
returned ``(A, B)`` are the exact derivatives of the discrete map.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np


class VectorField(Protocol):
    state_dim: int
    control_dim: int

    def derivative(self, x: np.ndarray, u: np.ndarray) -> np.ndarray: ...

    def derivative_jacobians(self, x: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...


def _matmul(a, b):
    return np.einsum("rij,rjk->rik", a, b)


@dataclass
class RK4Dynamics:
    field: VectorField
    dt: float

    @property
    def state_dim(self) -> int:
        return self.field.state_dim

    @property
    def control_dim(self) -> int:
        return self.field.control_dim

    def step(self, x, u):
        f, h = self.field.derivative, self.dt
        k1 = f(x, u)
        k2 = f(x + 0.5 * h * k1, u)
        k3 = f(x + 0.5 * h * k2, u)
        k4 = f(x + h * k3, u)
        return x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    def jacobians(self, x, u):
        f, jac, h = self.field.derivative, self.field.derivative_jacobians, self.dt
        r, n = x.shape
        eye = np.broadcast_to(np.eye(n), (r, n, n))
        # Each stage k_i depends on (x, u) through its evaluation point.
        k1 = f(x, u)
        fx, fu = jac(x, u)
        dk1x, dk1u = fx, fu
        k2 = f(x + 0.5 * h * k1, u)
        fx, fu = jac(x + 0.5 * h * k1, u)
        dk2x = _matmul(fx, eye + 0.5 * h * dk1x)
        dk2u = _matmul(fx, 0.5 * h * dk1u) + fu
        k3 = f(x + 0.5 * h * k2, u)
        fx, fu = jac(x + 0.5 * h * k2, u)
        dk3x = _matmul(fx, eye + 0.5 * h * dk2x)
        dk3u = _matmul(fx, 0.5 * h * dk2u) + fu
        fx, fu = jac(x + h * k3, u)
        dk4x = _matmul(fx, eye + h * dk3x)
        dk4u = _matmul(fx, h * dk3u) + fu
        A = eye + h / 6.0 * (dk1x + 2 * dk2x + 2 * dk3x + dk4x)
        B = h / 6.0 * (dk1u + 2 * dk2u + 2 * dk3u + dk4u)
        return A, B


def manipulator_acceleration(M, dM, b, db_dq, db_dqd, db_du):
    """Solve ``M(q) qdd = b(q, qd, u)`` and differentiate the solution.

    ``dM[..., k]`` is ``dM/dq_k``.  Uses ``d qdd = M^{-1} (db - dM qdd)``.
    Returns ``qdd`` and its derivatives in ``q``, ``qd`` and ``u``.
    """
    qdd = np.linalg.solve(M, b[..., None])[..., 0]
    rhs_q = db_dq - np.einsum("rikj,rk->rij", dM, qdd)
    d_q = np.linalg.solve(M, rhs_q)
    d_qd = np.linalg.solve(M, db_dqd)
    d_u = np.linalg.solve(M, db_du)
    return qdd, d_q, d_qd, d_u


def second_order_field_jacobians(d_q, d_qd, d_u):
    """Jacobians of ``(q, qd) -> (qd, qdd)`` given the acceleration derivatives."""
    r, k, _ = d_q.shape
    fx = np.zeros((r, 2 * k, 2 * k))
    fx[:, :k, k:] = np.eye(k)
    fx[:, k:, :k] = d_q
    fx[:, k:, k:] = d_qd
    fu = np.zeros((r, 2 * k, d_u.shape[2]))
    fu[:, k:] = d_u
    return fx, fu


# Fourth-order composition of the Stormer-Verlet map.
_CBRT2 = 2.0 ** (1.0 / 3.0)
_W1 = 1.0 / (2.0 - _CBRT2)
YOSHIDA4 = (_W1, -_CBRT2 * _W1, _W1)
VERLET = (1.0,)
