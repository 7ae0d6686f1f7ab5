"""Named benchmark tasks: prior, energy or control problem, and initial states.

Cost weights and physical constants here are local choices; absolute cost
values are only comparable between runs of this package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..extended import Dirac, InitialStateDistribution, UniformBox
from ..features import StateEmbedding
from ..policy import MlpPolicy
from ..rollout import ControlProblem, OpenLoopController, RolloutEnergy
from ..targets import Ar1ControlPrior, EnergyModel, GaussianIidPrior, Prior, quadratic_energy
from .costs import FeatureQuadraticCost, PendulumTipKeypoints, SparseTerminalCost
from .linear import scalar_lti
from .manipulators import AcrobotParams, CartDoublePendulumParams, acrobot_dynamics, cart_double_pendulum_dynamics
from .pendulum import DOWN, UPRIGHT, PendulumDynamics, PendulumParams
from .shekel import ShekelEnergy

CONTROLLERS = ("open_loop", "mlp")
HIDDEN = (32, 32)
AR1_GAMMA = 0.9
AR1_SIGMA = 0.3  # innovation scale of the open-loop control prior


@dataclass
class Task:
    env_id: str
    prior: Prior
    energy: EnergyModel | None = None
    problem: ControlProblem | None = None
    distribution: InitialStateDistribution | None = None

    @property
    def is_control(self) -> bool:
        return self.problem is not None

    @property
    def dim(self) -> int:
        return self.problem.controller.param_dim if self.is_control else self.energy.dim

    @property
    def has_point_start(self) -> bool:
        return isinstance(self.distribution, Dirac)

    def point_energy(self) -> EnergyModel:
        """Energy for tasks with a single initial state (or a static energy)."""
        if not self.is_control:
            return self.energy
        if not self.has_point_start:
            raise ValueError(f"{self.env_id} has a distribution of initial states; pick a batch")
        return RolloutEnergy(self.problem, self.distribution.state[None])


@dataclass
class ControlSetup:
    """Everything that differs between the dynamical benchmarks."""

    dynamics: object
    horizon: int
    u_max: float
    state_dim: int
    angle_indices: tuple[int, ...]
    goal: np.ndarray
    start: np.ndarray
    state_weights: np.ndarray
    control_weight: float
    terminal_weights: np.ndarray
    default_controller: str


def _pendulum(horizon=None, dt=None, controller=None):
    params = PendulumParams(dt=dt or PendulumParams.dt)
    return ControlSetup(PendulumDynamics(params), horizon or params.horizon, params.u_max, 2, (0,), UPRIGHT, DOWN,
                        state_weights=np.array([1.0, 1.0, 0.1]), control_weight=0.01,
                        terminal_weights=np.array([10.0, 10.0, 1.0]), default_controller="open_loop")


def _acrobot(horizon=None, dt=None, controller=None):
    policy = controller == "mlp"
    base = AcrobotParams(dt=0.04, horizon=100) if policy else AcrobotParams()
    params = AcrobotParams(dt=dt or base.dt, horizon=horizon or base.horizon)
    return ControlSetup(acrobot_dynamics(params), params.horizon, params.u_max, 4, (0, 1),
                        np.array([np.pi, 0.0, 0.0, 0.0]), np.zeros(4),
                        state_weights=np.array([1.0, 1.0, 1.0, 1.0, 0.05, 0.05]), control_weight=0.01,
                        terminal_weights=np.array([50.0, 50.0, 50.0, 50.0, 5.0, 5.0]),
                        default_controller="open_loop")


def _cart(horizon=None, dt=None, controller=None):
    params = CartDoublePendulumParams()
    params = CartDoublePendulumParams(dt=dt or params.dt, horizon=horizon or params.horizon)
    return ControlSetup(cart_double_pendulum_dynamics(params), params.horizon, params.u_max, 6, (1, 2),
                        np.array([0.0, np.pi, np.pi, 0.0, 0.0, 0.0]), np.zeros(6),
                        state_weights=np.array([0.5, 1.0, 1.0, 1.0, 1.0, 0.05, 0.05, 0.05]),
                        control_weight=0.001,
                        terminal_weights=np.array([5.0, 50.0, 50.0, 50.0, 50.0, 5.0, 5.0, 5.0]),
                        default_controller="mlp")


SETUPS = {"pendulum": _pendulum, "acrobot": _acrobot, "cart_double_pendulum": _cart}


def _controller(kind, setup: ControlSetup, policy_sigma):
    if kind == "open_loop":
        ctrl = OpenLoopController(setup.horizon, 1, setup.u_max)
        return ctrl, Ar1ControlPrior(gamma=AR1_GAMMA, sigma=AR1_SIGMA, horizon=setup.horizon)
    if kind == "mlp":
        ctrl = MlpPolicy((setup.state_dim,) + HIDDEN + (1,), u_max=setup.u_max, output_bias=False)
        return ctrl, GaussianIidPrior.standard(ctrl.param_dim, policy_sigma)
    raise ValueError(f"unknown controller {kind!r}; choose from {CONTROLLERS}")


def make_task(env_id: str, controller: str | None = None, horizon: int | None = None, dt: float | None = None,
              policy_sigma: float = 0.5) -> Task:
    """Build a benchmark by name; see :data:`ENVIRONMENTS`."""
    if env_id == "gaussian":
        return Task(env_id, GaussianIidPrior.standard(2), energy=quadratic_energy(np.diag([2.0, 0.5])))
    if env_id == "shekel":
        return Task(env_id, GaussianIidPrior.standard(2), energy=ShekelEnergy())
    if env_id == "lti":
        T = horizon or 10
        policy = MlpPolicy((1, 1), activation="identity", output_bias=False)
        embedding = StateEmbedding(1)
        cost = FeatureQuadraticCost(embedding, np.zeros(1), 1.0, 0.1, 1.0)
        problem = ControlProblem(policy, scalar_lti(), cost, T)
        return Task(env_id, GaussianIidPrior.standard(1), problem=problem, distribution=UniformBox([-1.0], [1.0]))
    if env_id == "pendulum_sparse":
        params = PendulumParams(dt=dt or PendulumParams.dt)
        T = horizon or 32
        setup = _pendulum(T, params.dt)
        ctrl, prior = _controller(controller or "mlp", setup, policy_sigma)
        cost = SparseTerminalCost(PendulumTipKeypoints(params.length), UPRIGHT)
        problem = ControlProblem(ctrl, setup.dynamics, cost, T)
        box = UniformBox([-np.pi, -np.pi], [np.pi, np.pi])
        return Task(env_id, prior, problem=problem, distribution=box)
    if env_id in SETUPS:
        setup = SETUPS[env_id](horizon, dt, controller)
        kind = controller or setup.default_controller
        ctrl, prior = _controller(kind, setup, policy_sigma)
        embedding = StateEmbedding(setup.state_dim, setup.angle_indices)
        cost = FeatureQuadraticCost(embedding, setup.goal, setup.state_weights, setup.control_weight,
                                    setup.terminal_weights)
        problem = ControlProblem(ctrl, setup.dynamics, cost, setup.horizon)
        return Task(env_id, prior, problem=problem, distribution=Dirac(setup.start))
    raise ValueError(f"unknown environment {env_id!r}; choose from {sorted(ENVIRONMENTS)}")


ENVIRONMENTS = {
    "gaussian": "2-D quadratic energy under a standard normal prior (closed-form oracle)",
    "shekel": "negative Shekel energy with three wells under a standard normal prior",
    "lti": "scalar x' = 0.9 x + u with linear feedback u = k x, initial state uniform on [-1, 1]",
    "pendulum": "pendulum swing-up, open-loop controls, dt 0.1, T 30",
    "pendulum_sparse": "pendulum swing-up policy with a sparse terminal cost, initial states uniform",
    "acrobot": "acrobot swing-up, open-loop (dt 0.025, T 200) or policy (dt 0.04, T 100)",
    "cart_double_pendulum": "double pendulum on a cart, policy swing-up, dt 0.06, T 100",
}
