"""Priors over controller parameters, energy models and tempered potentials.

All evaluators act on a batch of parameter vectors with shape ``(N, d)`` and
return one value (or gradient row) per particle.  A 1-D input is treated as a
batch of one and the leading axis is dropped from the result.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np


def as_batch(thetas) -> tuple[np.ndarray, bool]:
    arr = np.asarray(thetas, dtype=float)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim != 2:
        raise ValueError(f"expected (d,) or (N, d) parameters, got shape {arr.shape}")
    return arr, False


def _unbatch(value, single: bool):
    if not single:
        return value
    if isinstance(value, tuple):
        return tuple(_unbatch(v, True) for v in value)
    return value[0]


class EnergyModel(Protocol):
    """Anything the samplers can tilt a prior with.

    ``energy_and_grad`` must return ``+inf`` energy (and a finite gradient
    row) for parameters whose evaluation diverged.
    """

    dim: int

    def energy(self, thetas: np.ndarray) -> np.ndarray: ...

    def energy_and_grad(self, thetas: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...


@dataclass
class FunctionEnergy:
    """Energy given by plain batched callables."""

    dim: int
    value_fn: Callable[[np.ndarray], np.ndarray]
    grad_fn: Callable[[np.ndarray], np.ndarray]

    def energy(self, thetas):
        x, single = as_batch(thetas)
        return _unbatch(np.asarray(self.value_fn(x), dtype=float), single)

    def energy_and_grad(self, thetas):
        x, single = as_batch(thetas)
        return _unbatch((np.asarray(self.value_fn(x), float), np.asarray(self.grad_fn(x), float)), single)


def quadratic_energy(precision) -> FunctionEnergy:
    """``E(theta) = 0.5 theta^T Q theta`` for a symmetric matrix ``Q``."""
    Q = np.atleast_2d(np.asarray(precision, dtype=float))
    return FunctionEnergy(
        dim=Q.shape[0],
        value_fn=lambda x: 0.5 * np.einsum("ni,ij,nj->n", x, Q, x),
        grad_fn=lambda x: x @ Q.T,
    )


def zero_energy(dim: int) -> FunctionEnergy:
    return FunctionEnergy(dim, lambda x: np.zeros(len(x)), lambda x: np.zeros_like(x))


class Prior(Protocol):
    dim: int

    def log_density(self, thetas) -> np.ndarray: ...

    def grad_log_density(self, thetas) -> np.ndarray: ...

    def sample(self, rng: np.random.Generator) -> np.ndarray: ...


@dataclass
class GaussianIidPrior:
    """Isotropic Gaussian ``N(mean, sigma^2 I)``."""

    mean: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @classmethod
    def standard(cls, dim: int, sigma: float = 1.0) -> "GaussianIidPrior":
        return cls(np.zeros(dim), sigma)

    @property
    def dim(self) -> int:
        return self.mean.size

    def log_density(self, thetas):
        x, single = as_batch(thetas)
        r = (x - self.mean) / self.sigma
        lp = -0.5 * np.sum(r * r, axis=1) - self.dim * (np.log(self.sigma) + 0.5 * np.log(2 * np.pi))
        return _unbatch(lp, single)

    def grad_log_density(self, thetas):
        x, single = as_batch(thetas)
        return _unbatch(-(x - self.mean) / self.sigma**2, single)

    def sample(self, rng):
        return self.mean + self.sigma * rng.standard_normal(self.dim)


@dataclass
class Ar1ControlPrior:
    """First-order autoregressive prior over an open-loop control sequence.

    ``theta`` is the flattened ``(T, m)`` sequence with
    ``u_t = gamma u_{t-1} + eps_t``, ``eps_t ~ N(0, sigma^2 I)``.  With
    ``stationary=False`` the recursion starts from ``u_{-1} = 0``; otherwise
    ``u_0`` is drawn from the stationary law ``N(0, sigma^2 / (1 - gamma^2))``.
    """

    gamma: float = 0.9
    sigma: float = 0.3
    horizon: int = 30
    control_dim: int = 1
    stationary: bool = False

    def __post_init__(self):
        if not -1 < self.gamma < 1:
            raise ValueError("gamma must lie in (-1, 1)")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def dim(self) -> int:
        return self.horizon * self.control_dim

    def _controls(self, thetas):
        x, single = as_batch(thetas)
        if x.shape[1] != self.dim:
            raise ValueError(f"AR(1) prior expects dimension {self.dim}, got {x.shape[1]}")
        return x.reshape(len(x), self.horizon, self.control_dim), single

    def _innovations(self, u):
        eps = u.copy()
        eps[:, 1:] -= self.gamma * u[:, :-1]
        if self.stationary:
            eps[:, 0] *= np.sqrt(1.0 - self.gamma**2)
        return eps

    def log_density(self, thetas):
        u, single = self._controls(thetas)
        eps = self._innovations(u)
        lp = -0.5 * np.sum(eps**2, axis=(1, 2)) / self.sigma**2
        lp -= 0.5 * self.dim * np.log(2 * np.pi * self.sigma**2)
        if self.stationary:
            lp += 0.5 * self.control_dim * np.log(1.0 - self.gamma**2)
        return _unbatch(lp, single)

    def grad_log_density(self, thetas):
        u, single = self._controls(thetas)
        eps = self._innovations(u)
        g = -eps / self.sigma**2
        if self.stationary:
            g[:, 0] *= np.sqrt(1.0 - self.gamma**2)
        # u_t also enters the next innovation eps_{t+1} = u_{t+1} - gamma u_t
        g[:, :-1] += self.gamma * eps[:, 1:] / self.sigma**2
        return _unbatch(g.reshape(len(u), -1), single)

    def sample(self, rng):
        z = rng.standard_normal((self.horizon, self.control_dim)) * self.sigma
        if self.stationary:
            z[0] /= np.sqrt(1.0 - self.gamma**2)
        u = np.empty_like(z)
        prev = np.zeros(self.control_dim)
        for t in range(self.horizon):
            prev = self.gamma * prev + z[t]
            u[t] = prev
        return u.ravel()


@dataclass
class PotentialEvaluator:
    """Negative log-density ``V`` and its gradient, batched over rows.

    ``subset(rows)`` returns the evaluator restricted to a subset of rows; it
    matters only for potentials that carry per-row context.
    """

    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    value_and_grad: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None
    subset: Callable[[np.ndarray], "PotentialEvaluator"] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.value_and_grad is None:
            self.value_and_grad = lambda x: (self.value(x), self.gradient(x))

    def rows(self, idx) -> "PotentialEvaluator":
        return self if self.subset is None else self.subset(idx)


@dataclass
class TemperedTarget:
    """``p_beta(theta) ∝ p0(theta) exp(-(beta / lam) E(theta))``."""

    prior: Prior
    energy: EnergyModel
    beta: float
    lam: float

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")


def tempered_potential(target: TemperedTarget) -> PotentialEvaluator:
    """``V(theta) = (beta / lam) E(theta) - log p0(theta)`` with its gradient."""
    prior, energy = target.prior, target.energy
    scale = target.beta / target.lam

    def value(x):
        x, single = as_batch(x)
        v = -prior.log_density(x)
        if scale != 0.0:
            v = v + scale * energy.energy(x)
        return _unbatch(v, single)

    def value_and_grad(x):
        x, single = as_batch(x)
        v = -prior.log_density(x)
        g = -prior.grad_log_density(x)
        if scale != 0.0:
            e, de = energy.energy_and_grad(x)
            v = v + scale * e
            g = g + scale * de
        return _unbatch((v, g), single)

    return PotentialEvaluator(value=value, gradient=lambda x: value_and_grad(x)[1], value_and_grad=value_and_grad)
