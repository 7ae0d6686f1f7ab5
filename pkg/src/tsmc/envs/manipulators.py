"""Acrobot and cart double pendulum in manipulator form ``M(q) qdd = b(q, qd, u)``.

Angles are zero when a link hangs straight down.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .integrators import RK4Dynamics, manipulator_acceleration, second_order_field_jacobians


class ManipulatorField:
    """Vector field ``(q, qd) -> (qd, qdd)`` for a subclass providing ``terms``."""

    dof: int
    control_dim = 1

    @property
    def state_dim(self) -> int:
        return 2 * self.dof

    def terms(self, q, qd, u, with_derivatives: bool):
        raise NotImplementedError

    def derivative(self, x, u):
        k = self.dof
        M, b = self.terms(x[:, :k], x[:, k:], u[:, 0], False)
        qdd = np.linalg.solve(M, b[..., None])[..., 0]
        return np.concatenate([x[:, k:], qdd], axis=1)

    def derivative_jacobians(self, x, u):
        k = self.dof
        parts = self.terms(x[:, :k], x[:, k:], u[:, 0], True)
        _, d_q, d_qd, d_u = manipulator_acceleration(*parts)
        return second_order_field_jacobians(d_q, d_qd, d_u)

    def energy(self, x):
        k = self.dof
        x = np.atleast_2d(x)
        M, _ = self.terms(x[:, :k], x[:, k:], np.zeros(len(x)), False)
        qd = x[:, k:]
        return 0.5 * np.einsum("ri,rij,rj->r", qd, M, qd) + self.potential(x[:, :k])


@dataclass
class AcrobotParams:
    m1: float = 1.0
    m2: float = 1.0
    l1: float = 1.0
    l2: float = 1.0
    lc1: float = 0.5
    lc2: float = 0.5
    # Link inertias about their own pivots (uniform rods).
    I1: float = 1.0 / 3.0
    I2: float = 1.0 / 3.0
    gravity: float = 9.81
    u_max: float = 8.0
    dt: float = 0.025
    horizon: int = 200


@dataclass
class AcrobotField(ManipulatorField):
    """Elbow-actuated two-link arm; state ``(q1, q2, q1d, q2d)`` with ``q2``
    relative to the first link."""

    params: AcrobotParams
    dof = 2

    def potential(self, q):
        p = self.params
        c1, c12 = np.cos(q[:, 0]), np.cos(q[:, 0] + q[:, 1])
        return -p.m1 * p.gravity * p.lc1 * c1 - p.m2 * p.gravity * (p.l1 * c1 + p.lc2 * c12)

    def terms(self, q, qd, u, with_derivatives):
        p = self.params
        g = p.gravity
        r = len(q)
        s1, c1 = np.sin(q[:, 0]), np.cos(q[:, 0])
        s2, c2 = np.sin(q[:, 1]), np.cos(q[:, 1])
        s12, c12 = np.sin(q[:, 0] + q[:, 1]), np.cos(q[:, 0] + q[:, 1])
        w1, w2 = qd[:, 0], qd[:, 1]
        k = p.m2 * p.l1 * p.lc2

        M = np.empty((r, 2, 2))
        M[:, 0, 0] = p.I1 + p.I2 + p.m2 * p.l1**2 + 2 * k * c2
        M[:, 0, 1] = M[:, 1, 0] = p.I2 + k * c2
        M[:, 1, 1] = p.I2
        b = np.empty((r, 2))
        b[:, 0] = (-p.m1 * g * p.lc1 * s1 - p.m2 * g * (p.l1 * s1 + p.lc2 * s12)
                   + k * s2 * (2 * w1 * w2 + w2**2))
        b[:, 1] = -p.m2 * g * p.lc2 * s12 - k * s2 * w1**2 + u
        if not with_derivatives:
            return M, b

        dM = np.zeros((r, 2, 2, 2))
        dM[:, 0, 0, 1] = -2 * k * s2
        dM[:, 0, 1, 1] = dM[:, 1, 0, 1] = -k * s2
        db_dq = np.empty((r, 2, 2))
        db_dq[:, 0, 0] = -p.m1 * g * p.lc1 * c1 - p.m2 * g * (p.l1 * c1 + p.lc2 * c12)
        db_dq[:, 0, 1] = -p.m2 * g * p.lc2 * c12 + k * c2 * (2 * w1 * w2 + w2**2)
        db_dq[:, 1, 0] = -p.m2 * g * p.lc2 * c12
        db_dq[:, 1, 1] = -p.m2 * g * p.lc2 * c12 - k * c2 * w1**2
        db_dqd = np.zeros((r, 2, 2))
        db_dqd[:, 0, 0] = 2 * k * s2 * w2
        db_dqd[:, 0, 1] = 2 * k * s2 * (w1 + w2)
        db_dqd[:, 1, 0] = -2 * k * s2 * w1
        db_du = np.zeros((r, 2, 1))
        db_du[:, 1, 0] = 1.0
        return M, dM, b, db_dq, db_dqd, db_du


@dataclass
class CartDoublePendulumParams:
    cart_mass: float = 1.0
    m1: float = 0.5
    m2: float = 0.5
    l1: float = 0.5
    l2: float = 0.5
    gravity: float = 9.81
    u_max: float = 20.0
    dt: float = 0.06
    horizon: int = 100


@dataclass
class CartDoublePendulumField(ManipulatorField):
    """Cart on a rail with two point-mass links; state
    ``(p, a1, a2, pd, a1d, a2d)`` with absolute link angles."""

    params: CartDoublePendulumParams
    dof = 3

    def potential(self, q):
        p = self.params
        c1, c2 = np.cos(q[:, 1]), np.cos(q[:, 2])
        return -p.gravity * ((p.m1 + p.m2) * p.l1 * c1 + p.m2 * p.l2 * c2)

    def terms(self, q, qd, u, with_derivatives):
        p = self.params
        g = p.gravity
        r = len(q)
        m12 = p.m1 + p.m2
        s1, c1 = np.sin(q[:, 1]), np.cos(q[:, 1])
        s2, c2 = np.sin(q[:, 2]), np.cos(q[:, 2])
        sd, cd = np.sin(q[:, 1] - q[:, 2]), np.cos(q[:, 1] - q[:, 2])
        w1, w2 = qd[:, 1], qd[:, 2]
        k = p.m2 * p.l1 * p.l2

        M = np.empty((r, 3, 3))
        M[:, 0, 0] = p.cart_mass + m12
        M[:, 0, 1] = M[:, 1, 0] = m12 * p.l1 * c1
        M[:, 0, 2] = M[:, 2, 0] = p.m2 * p.l2 * c2
        M[:, 1, 1] = m12 * p.l1**2
        M[:, 1, 2] = M[:, 2, 1] = k * cd
        M[:, 2, 2] = p.m2 * p.l2**2
        b = np.empty((r, 3))
        b[:, 0] = u + m12 * p.l1 * s1 * w1**2 + p.m2 * p.l2 * s2 * w2**2
        b[:, 1] = -k * sd * w2**2 - m12 * g * p.l1 * s1
        b[:, 2] = k * sd * w1**2 - p.m2 * g * p.l2 * s2
        if not with_derivatives:
            return M, b

        dM = np.zeros((r, 3, 3, 3))
        dM[:, 0, 1, 1] = dM[:, 1, 0, 1] = -m12 * p.l1 * s1
        dM[:, 1, 2, 1] = dM[:, 2, 1, 1] = -k * sd
        dM[:, 0, 2, 2] = dM[:, 2, 0, 2] = -p.m2 * p.l2 * s2
        dM[:, 1, 2, 2] = dM[:, 2, 1, 2] = k * sd
        db_dq = np.zeros((r, 3, 3))
        db_dq[:, 0, 1] = m12 * p.l1 * c1 * w1**2
        db_dq[:, 0, 2] = p.m2 * p.l2 * c2 * w2**2
        db_dq[:, 1, 1] = -k * cd * w2**2 - m12 * g * p.l1 * c1
        db_dq[:, 1, 2] = k * cd * w2**2
        db_dq[:, 2, 1] = k * cd * w1**2
        db_dq[:, 2, 2] = -k * cd * w1**2 - p.m2 * g * p.l2 * c2
        db_dqd = np.zeros((r, 3, 3))
        db_dqd[:, 0, 1] = 2 * m12 * p.l1 * s1 * w1
        db_dqd[:, 0, 2] = 2 * p.m2 * p.l2 * s2 * w2
        db_dqd[:, 1, 2] = -2 * k * sd * w2
        db_dqd[:, 2, 1] = 2 * k * sd * w1
        db_du = np.zeros((r, 3, 1))
        db_du[:, 0, 0] = 1.0
        return M, dM, b, db_dq, db_dqd, db_du


def acrobot_dynamics(params: AcrobotParams | None = None) -> RK4Dynamics:
    params = params or AcrobotParams()
    return RK4Dynamics(AcrobotField(params), params.dt)


def cart_double_pendulum_dynamics(params: CartDoublePendulumParams | None = None) -> RK4Dynamics:
    params = params or CartDoublePendulumParams()
    return RK4Dynamics(CartDoublePendulumField(params), params.dt)
