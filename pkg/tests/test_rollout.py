from dataclasses import dataclass

import numpy as np
import pytest

from tsmc.envs import LinearDynamics, PendulumDynamics, PendulumParams, make_task, scalar_lti
from tsmc.gradcheck import central_difference, relative_error
from tsmc.policy import MlpPolicy
from tsmc.rollout import (
    ControlProblem,
    OpenLoopController,
    RolloutDivergence,
    adjoint_gradient,
    batch_costs,
    make_energy,
    mean_cost_and_grad,
    rollout,
)


@dataclass
class ScalarQuadratic:
    """``q x_t^2 + r u_t^2`` per stage and ``qf x_T^2`` at the end."""

    q: float = 1.0
    r: float = 0.1
    qf: float = 1.0

    def stage(self, t, x, u):
        return self.q * x[:, 0] ** 2 + self.r * u[:, 0] ** 2

    def stage_grad(self, t, x, u):
        return 2 * self.q * x, 2 * self.r * u

    def terminal(self, x):
        return self.qf * x[:, 0] ** 2

    def terminal_grad(self, x):
        return 2 * self.qf * x


class ZeroCost(ScalarQuadratic):
    def __init__(self):
        super().__init__(0.0, 0.0, 0.0)


def integrator():
    return LinearDynamics([[1.0]], [[1.0]])


def test_single_step_trajectory():
    ctrl = OpenLoopController(1, squash="none")
    traj = rollout(np.array([2.0]), np.array([0.5]), ctrl, integrator(), ZeroCost(), 1)
    np.testing.assert_allclose(traj.states[:, 0], [2.0, 2.5])
    np.testing.assert_allclose(traj.controls[:, 0], [0.5])
    assert traj.total_cost == 0.0


def test_pendulum_rests_at_bottom():
    ctrl = OpenLoopController(30, squash="none")
    traj = rollout(np.zeros(2), np.zeros(30), ctrl, PendulumDynamics(PendulumParams()), ZeroCost(), 30)
    np.testing.assert_array_equal(traj.states, 0.0)


def test_lti_cost_matches_direct_sum():
    ctrl = OpenLoopController(5, squash="none")
    u = np.array([0.3, -0.2, 0.1, 0.0, -0.4])
    cost = ScalarQuadratic(1.0, 0.1, 2.0)
    traj = rollout(np.array([1.0]), u, ctrl, scalar_lti(), cost, 5)
    x, total = 1.0, 0.0
    for ut in u:
        total += x * x + 0.1 * ut * ut
        x = 0.9 * x + ut
    total += 2.0 * x * x
    assert traj.total_cost == pytest.approx(total, rel=1e-14)


def test_hand_chain_rule_example():
    ctrl = OpenLoopController(1, squash="none")

    @dataclass
    class Hand(ScalarQuadratic):
        def stage(self, t, x, u):
            return u[:, 0] ** 2

        def stage_grad(self, t, x, u):
            return np.zeros_like(x), 2 * u

    cost = Hand()
    traj = rollout(np.array([1.0]), np.array([0.5]), ctrl, integrator(), cost, 1)
    assert traj.total_cost == pytest.approx(0.25 + 2.25)
    grad = adjoint_gradient(traj, np.array([0.5]), ctrl, integrator(), cost)
    assert grad[0] == pytest.approx(4.0)


def test_zero_cost_gradient_is_zero():
    ctrl = OpenLoopController(4, squash="none")
    traj = rollout(np.array([1.0]), np.ones(4), ctrl, scalar_lti(), ZeroCost(), 4)
    np.testing.assert_array_equal(adjoint_gradient(traj, np.ones(4), ctrl, scalar_lti(), ZeroCost()), 0.0)


def test_open_loop_adjoint_equals_direct_gradient():
    # J as an explicit function of u for x' = a x + u
    T, a = 6, 0.9
    ctrl = OpenLoopController(T, squash="none")
    cost = ScalarQuadratic(1.0, 0.1, 1.0)
    u = np.random.default_rng(0).standard_normal(T)
    x0 = 0.7
    traj = rollout(np.array([x0]), u, ctrl, scalar_lti(a), cost, T)
    xs = traj.states[:, 0]
    # dx_s/du_t = a^(s-1-t) for s > t
    direct = 0.2 * u.copy()
    for t in range(T):
        for s in range(t + 1, T + 1):
            direct[t] += 2 * xs[s] * a ** (s - 1 - t)  # q = qf = 1
    grad = adjoint_gradient(traj, u, ctrl, scalar_lti(a), cost)
    np.testing.assert_allclose(grad, direct, rtol=1e-12)


def test_open_loop_jacobians_are_block_selectors():
    ctrl = OpenLoopController(4, control_dim=2, squash="none")
    theta = np.arange(8.0)[None]
    L, G = ctrl.jacobians(theta, 2, np.zeros((1, 3)))
    np.testing.assert_array_equal(L, 0.0)
    expected = np.zeros((2, 8))
    expected[:, 4:6] = np.eye(2)
    np.testing.assert_array_equal(G[0], expected)


def test_divergence_raises_with_step():
    ctrl = OpenLoopController(5, squash="none")
    u = np.array([0.0, 0.0, np.inf, 0.0, 0.0])
    with pytest.raises(RolloutDivergence) as info:
        rollout(np.array([1.0]), u, ctrl, scalar_lti(), ScalarQuadratic(), 5)
    assert info.value.step == 2


def test_make_energy_single_and_duplicated():
    ctrl = OpenLoopController(5, squash="none")
    u = np.random.default_rng(1).standard_normal(5)
    cost = ScalarQuadratic()
    single = make_energy(ctrl, scalar_lti(), cost, np.array([[0.4]]), 5)
    traj = rollout(np.array([0.4]), u, ctrl, scalar_lti(), cost, 5)
    e1, g1 = single(u)
    assert e1 == traj.total_cost
    dup = make_energy(ctrl, scalar_lti(), cost, np.full((6, 1), 0.4), 5)
    e6, g6 = dup(u)
    assert e6 == pytest.approx(e1, rel=1e-15)
    np.testing.assert_allclose(g6, g1, rtol=1e-14)


def test_make_energy_batch_is_mean_of_states():
    ctrl = OpenLoopController(5, squash="none")
    u = np.random.default_rng(2).standard_normal(5)
    cost = ScalarQuadratic()
    states = np.array([[-1.0], [0.2], [0.5], [0.9]])
    e, g = make_energy(ctrl, scalar_lti(), cost, states, 5)(u)
    per = [rollout(x, u, ctrl, scalar_lti(), cost, 5) for x in states]
    assert e == pytest.approx(np.mean([p.total_cost for p in per]), rel=1e-14)
    grads = [adjoint_gradient(p, u, ctrl, scalar_lti(), cost) for p in per]
    np.testing.assert_allclose(g, np.mean(grads, axis=0), rtol=1e-12)


def test_make_energy_reports_bad_state():
    ctrl = OpenLoopController(3, squash="none")
    energy = make_energy(ctrl, scalar_lti(), ScalarQuadratic(), np.array([[0.0], [np.nan]]), 3)
    with pytest.raises(RolloutDivergence) as info:
        energy(np.zeros(3))
    assert info.value.index == 1


def test_batched_energy_maps_divergence_to_inf():
    ctrl = OpenLoopController(3, squash="none")
    energy = make_energy(ctrl, scalar_lti(), ScalarQuadratic(), np.array([[0.5]]), 3)
    E, G = energy.energy_and_grad(np.array([[0.0, 0.0, 0.0], [np.inf, 0.0, 0.0]]))
    assert np.isfinite(E[0]) and E[1] == np.inf
    np.testing.assert_array_equal(G[1], 0.0)


def test_determinism_and_resimulation():
    task = make_task("pendulum", controller="mlp")
    theta = task.prior.sample(np.random.default_rng(3))
    x0 = np.array([0.3, -0.2])
    J1, G1, _ = batch_costs(task.problem, theta[None], x0[None])
    J2, G2, _ = batch_costs(task.problem, theta[None], x0[None])
    assert np.array_equal(J1, J2) and np.array_equal(G1, G2)
    traj = rollout(x0, theta, task.problem.controller, task.problem.dynamics, task.problem.cost, 30)
    for t in range(30):
        nxt = task.problem.dynamics.step(traj.states[t][None], traj.controls[t][None])[0]
        assert np.array_equal(nxt, traj.states[t + 1])


def test_costs_nonnegative():
    for env in ("pendulum", "acrobot", "cart_double_pendulum", "pendulum_sparse", "lti"):
        task = make_task(env)
        rng = np.random.default_rng(4)
        th = np.stack([task.prior.sample(rng) for _ in range(4)]) * 0.5
        x0 = np.stack([task.distribution.sample(rng) for _ in range(3)])
        J, _, _ = batch_costs(task.problem, th, x0, with_grad=False)
        assert np.all(J >= 0)


def test_grouped_gradient_matches_per_state():
    task = make_task("pendulum", controller="mlp")
    rng = np.random.default_rng(5)
    th = np.stack([task.prior.sample(rng) for _ in range(3)])
    x0 = rng.uniform(-1, 1, (3, 4, 2))
    E, G = mean_cost_and_grad(task.problem, th, x0)
    for i in range(3):
        singles = [batch_costs(task.problem, th[i][None], x[None]) for x in x0[i]]
        assert E[i] == pytest.approx(np.mean([s[0][0, 0] for s in singles]), rel=1e-13)
        np.testing.assert_allclose(G[i], np.mean([s[1][0] for s in singles], axis=0), rtol=1e-10, atol=1e-13)


def test_mlp_lti_gradient():
    ctrl = MlpPolicy((1, 4, 1), u_max=2.0)
    problem = ControlProblem(ctrl, scalar_lti(), ScalarQuadratic(), 8)
    theta = np.random.default_rng(6).standard_normal(ctrl.param_dim)
    x0 = np.array([[0.8]])
    _, G, _ = batch_costs(problem, theta[None], x0)
    fd = central_difference(lambda p: batch_costs(problem, p, x0, with_grad=False)[0][:, 0], theta)
    assert relative_error(G[0], fd) < 1e-7
