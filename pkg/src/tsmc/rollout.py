"""Trajectory rollouts and exact gradients through the costate recursion.

Dynamics, costs and controllers all evaluate a batch of rows at once:
states ``(R, n)``, controls ``(R, m)``, parameters ``(R, d)``.  Gradients are
computed by the backward recursion

    phi_T = dl_T/dx
    g_t   = dl_t/du + B_t^T phi_{t+1}
    phi_t = dl_t/dx + L_t^T g_t + A_t^T phi_{t+1}
    dJ/dtheta = sum_t G_t^T g_t

using analytic Jacobians supplied by each model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .targets import as_batch


class RolloutDivergence(FloatingPointError):
    """A rollout produced a non-finite state or cost."""

    def __init__(self, step: int, index: int | None = None):
        self.step = step
        self.index = index
        where = f" for initial state {index}" if index is not None else ""
        super().__init__(f"rollout diverged at step {step}{where}")


class DynamicsModel(Protocol):
    state_dim: int
    control_dim: int

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray: ...

    def jacobians(self, x: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...


class CostModel(Protocol):
    def stage(self, t: int, x: np.ndarray, u: np.ndarray) -> np.ndarray: ...

    def stage_grad(self, t: int, x: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...

    def terminal(self, x: np.ndarray) -> np.ndarray: ...

    def terminal_grad(self, x: np.ndarray) -> np.ndarray: ...


class Controller(Protocol):
    """Controllers see ``theta`` with one row per particle and states with
    ``group`` consecutive rows per particle (``len(x) == group * len(theta)``).
    """

    param_dim: int
    control_dim: int

    def act(self, theta: np.ndarray, t: int, x: np.ndarray) -> np.ndarray: ...

    def jacobians(self, theta: np.ndarray, t: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-state ``L = du/dx`` and ``G = du/dtheta``."""

    def vjp(self, theta: np.ndarray, t: int, x: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return ``L^T g`` per state and ``G^T g`` summed over each particle's states."""


def group_size(theta, x) -> int:
    n, r = len(theta), len(x)
    if r % n:
        raise ValueError(f"{r} states cannot be split evenly over {n} parameter rows")
    return r // n


def squash(z, u_max, mode):
    """Apply control limits; returns the control and its elementwise slope."""
    if mode == "none" or u_max is None:
        return z, np.ones_like(z)
    if mode == "tanh":
        th = np.tanh(z / u_max)
        return u_max * th, 1.0 - th * th
    if mode == "clip":
        inside = np.abs(z) < u_max
        return np.clip(z, -u_max, u_max), inside.astype(float)
    raise ValueError(f"unknown squash mode {mode!r}")


@dataclass
class OpenLoopController:
    """``theta`` is the flattened control sequence ``(u_0, ..., u_{T-1})``.

    With ``squash="none"`` ``G_t`` is the t-th block selector; otherwise each
    control is passed through ``u_max * tanh(theta_t / u_max)`` (or a clip).
    """

    horizon: int
    control_dim: int = 1
    u_max: float | None = None
    squash: str = "tanh"

    @property
    def param_dim(self) -> int:
        return self.horizon * self.control_dim

    def _block(self, theta, t):
        m = self.control_dim
        return theta[:, t * m:(t + 1) * m]

    def act(self, theta, t, x):
        u = squash(self._block(theta, t), self.u_max, self.squash)[0]
        return np.repeat(u, group_size(theta, x), axis=0)

    def jacobians(self, theta, t, x):
        theta = np.repeat(theta, group_size(theta, x), axis=0)
        r, m = len(theta), self.control_dim
        _, slope = squash(self._block(theta, t), self.u_max, self.squash)
        G = np.zeros((r, m, self.param_dim))
        G[:, np.arange(m), t * m + np.arange(m)] = slope
        return np.zeros((r, m, x.shape[1])), G

    def vjp(self, theta, t, x, g):
        m, k = self.control_dim, group_size(theta, x)
        _, slope = squash(self._block(theta, t), self.u_max, self.squash)
        gt = np.zeros_like(theta)
        gt[:, t * m:(t + 1) * m] = g.reshape(len(theta), k, m).sum(axis=1) * slope
        return np.zeros_like(x), gt


@dataclass
class Trajectory:
    """States ``x_0..x_T``, controls, stage costs and total cost.

    Arrays may carry a leading batch axis.
    """

    states: np.ndarray
    controls: np.ndarray
    stage_costs: np.ndarray
    terminal_cost: np.ndarray

    @property
    def total_cost(self):
        return self.stage_costs.sum(axis=-1) + self.terminal_cost

    @property
    def horizon(self) -> int:
        return self.controls.shape[-2]


@dataclass
class ControlProblem:
    """A controller, dynamics, cost and horizon: everything a rollout needs."""

    controller: Controller
    dynamics: DynamicsModel
    cost: CostModel
    horizon: int

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


def simulate(problem: ControlProblem, x0, theta) -> tuple[Trajectory, np.ndarray]:
    """Batched forward pass.

    ``x0`` holds the same number of consecutive initial states for each row
    of ``theta``.  Returns the trajectory batch and, per row, the first step at which a
    state or cost became non-finite (``-1`` if none).
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    T = problem.horizon
    ctrl, dyn, cost = problem.controller, problem.dynamics, problem.cost
    r, n = x0.shape
    m = ctrl.control_dim
    xs = np.empty((r, T + 1, n))
    us = np.empty((r, T, m))
    stage = np.empty((r, T))
    xs[:, 0] = x0
    bad_at = np.full(r, -1)
    with np.errstate(all="ignore"):
        for t in range(T):
            x = xs[:, t]
            u = ctrl.act(theta, t, x)
            us[:, t] = u
            stage[:, t] = cost.stage(t, x, u)
            xs[:, t + 1] = dyn.step(x, u)
            bad = (bad_at < 0) & ~(np.all(np.isfinite(xs[:, t + 1]), axis=1) & np.isfinite(stage[:, t]))
            bad_at[bad] = t
        terminal = cost.terminal(xs[:, T])
    bad_at[(bad_at < 0) & ~np.isfinite(terminal)] = T
    return Trajectory(xs, us, stage, terminal), bad_at


def backward(problem: ControlProblem, traj: Trajectory, theta) -> np.ndarray:
    """Costate recursion over a trajectory batch.

    Returns ``dJ/dtheta`` per parameter row, summed over that row's states.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    ctrl, dyn, cost = problem.controller, problem.dynamics, problem.cost
    xs, us = traj.states, traj.controls
    T = traj.horizon
    phi = cost.terminal_grad(xs[:, T])
    grad = np.zeros_like(theta)
    for t in range(T - 1, -1, -1):
        x, u = xs[:, t], us[:, t]
        A, B = dyn.jacobians(x, u)
        lx, lu = cost.stage_grad(t, x, u)
        g = lu + np.einsum("rij,ri->rj", B, phi)
        Ltg, Gtg = ctrl.vjp(theta, t, x, g)
        phi = lx + Ltg + np.einsum("rij,ri->rj", A, phi)
        grad += Gtg
    return grad


def rollout(x0, theta, controller: Controller, dynamics: DynamicsModel, cost: CostModel, T: int) -> Trajectory:
    """Roll out a single controller from a single initial state."""
    problem = ControlProblem(controller, dynamics, cost, T)
    traj, bad_at = simulate(problem, np.asarray(x0, float)[None], np.asarray(theta, float)[None])
    if bad_at[0] >= 0:
        raise RolloutDivergence(int(bad_at[0]))
    return Trajectory(traj.states[0], traj.controls[0], traj.stage_costs[0], traj.terminal_cost[0])


def adjoint_gradient(trajectory: Trajectory, theta, controller: Controller, dynamics: DynamicsModel,
                     cost: CostModel) -> np.ndarray:
    """Exact ``dJ/dtheta`` for a trajectory produced by :func:`rollout`."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (controller.param_dim,):
        raise ValueError(f"theta must have shape ({controller.param_dim},), got {theta.shape}")
    states = np.asarray(trajectory.states)
    if states.ndim != 2 or states.shape[1] != dynamics.state_dim:
        raise ValueError("trajectory states do not match the dynamics state dimension")
    batch = Trajectory(states[None], np.asarray(trajectory.controls)[None],
                       np.atleast_1d(trajectory.stage_costs)[None], np.atleast_1d(trajectory.terminal_cost))
    problem = ControlProblem(controller, dynamics, cost, trajectory.horizon)
    return backward(problem, batch, theta[None])[0]


def batch_costs(problem: ControlProblem, thetas, x0s, with_grad: bool = True):
    """Costs of every (particle, initial state) pair.

    ``thetas`` is ``(N, d)`` and ``x0s`` is ``(N, B, n)`` or ``(B, n)`` (shared).
    Returns ``J`` of shape ``(N, B)``, the batch-mean gradient ``(N, d)`` (or
    None) and the divergence step per pair (``-1`` where finite).
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    x0s = np.asarray(x0s, dtype=float)
    N = len(thetas)
    if x0s.ndim == 2:
        x0s = np.broadcast_to(x0s, (N,) + x0s.shape)
    B = x0s.shape[1]
    traj, bad_at = simulate(problem, x0s.reshape(N * B, -1), thetas)
    J = traj.total_cost.reshape(N, B)
    grads = None
    if with_grad:
        with np.errstate(all="ignore"):
            grads = backward(problem, traj, thetas) / B
    return J, grads, bad_at.reshape(N, B)


def mean_cost_and_grad(problem: ControlProblem, thetas, x0s, with_grad: bool = True):
    """Batch-averaged cost per particle; diverged particles get ``+inf``
    energy and a zero gradient row."""
    J, grads, bad_at = batch_costs(problem, thetas, x0s, with_grad)
    diverged = np.any(bad_at >= 0, axis=1)
    E = np.where(diverged, np.inf, J.mean(axis=1))
    if not with_grad:
        return E, None
    grads[diverged] = 0.0
    return E, grads


@dataclass
class RolloutEnergy:
    """``E(theta)``: mean trajectory cost over a fixed set of initial states.

    Batched methods map divergence to ``+inf``; calling the object on a single
    parameter vector raises :class:`RolloutDivergence` instead.
    """

    problem: ControlProblem
    initial_states: np.ndarray

    def __post_init__(self):
        self.initial_states = np.atleast_2d(np.asarray(self.initial_states, dtype=float))
        if len(self.initial_states) == 0:
            raise ValueError("need at least one initial state")

    @property
    def dim(self) -> int:
        return self.problem.controller.param_dim

    def energy(self, thetas):
        x, single = as_batch(thetas)
        E, _ = mean_cost_and_grad(self.problem, x, self.initial_states, with_grad=False)
        return E[0] if single else E

    def energy_and_grad(self, thetas):
        x, single = as_batch(thetas)
        E, G = mean_cost_and_grad(self.problem, x, self.initial_states)
        return (E[0], G[0]) if single else (E, G)

    def __call__(self, theta) -> tuple[float, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        J, grads, bad_at = batch_costs(self.problem, theta[None], self.initial_states)
        bad = np.flatnonzero(bad_at[0] >= 0)
        if bad.size:
            raise RolloutDivergence(int(bad_at[0, bad[0]]), index=int(bad[0]))
        return float(J[0].mean()), grads[0]


def make_energy(controller: Controller, dynamics: DynamicsModel, cost: CostModel, initial_states,
                T: int) -> RolloutEnergy:
    """Energy model averaging rollout cost over one or many initial states."""
    return RolloutEnergy(ControlProblem(controller, dynamics, cost, T), initial_states)
