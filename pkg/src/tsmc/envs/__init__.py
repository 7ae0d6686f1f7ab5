"""Benchmark energies and dynamical systems."""

from .costs import FeatureQuadraticCost, PendulumTipKeypoints, SparseTerminalCost, sparse_terminal_cost
from .linear import LinearDynamics, scalar_lti
from .manipulators import acrobot_dynamics, cart_double_pendulum_dynamics
from .pendulum import PendulumDynamics, PendulumParams
from .registry import ENVIRONMENTS, Task, make_task
from .shekel import ShekelEnergy, grid_minimum
