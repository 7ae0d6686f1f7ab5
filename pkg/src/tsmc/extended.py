"""Policy optimization over a distribution of initial states.

Two samplers share the tempering loop:

* the fixed-batch surrogate draws one batch of initial states at the start
  and runs ordinary tempered SMC on the batch-averaged cost;
* the extended-space sampler gives every particle its own batch, resamples
  parameters and batch together, moves the parameters with HMC at a fixed
  batch, and then refreshes the batch members by Metropolis-Hastings.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from . import rng as rngmod
from .particles import (
    ParticlePopulation,
    RunRecord,
    TsmcConfig,
    initial_thetas,
    map_rows,
    rejuvenate,
    run_tempering,
    run_tsmc,
)
from .rollout import ControlProblem, RolloutEnergy, batch_costs, mean_cost_and_grad
from .targets import PotentialEvaluator, Prior, as_batch


class InitialStateDistribution(Protocol):
    state_dim: int

    def sample(self, rng: np.random.Generator) -> np.ndarray: ...

    def contains(self, x: np.ndarray) -> bool: ...


@dataclass
class UniformBox:
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        self.low = np.atleast_1d(np.asarray(self.low, dtype=float))
        self.high = np.atleast_1d(np.asarray(self.high, dtype=float))
        if self.low.shape != self.high.shape or np.any(self.high < self.low):
            raise ValueError("box bounds must have equal shape and low <= high")

    @property
    def state_dim(self) -> int:
        return len(self.low)

    @property
    def description(self) -> str:
        return f"uniform box [{self.low.tolist()}, {self.high.tolist()}]"

    def sample(self, rng):
        return rng.uniform(self.low, self.high)

    def contains(self, x):
        x = np.asarray(x)
        return bool(np.all(x >= self.low) and np.all(x <= self.high))


@dataclass
class Dirac:
    state: np.ndarray

    def __post_init__(self):
        self.state = np.atleast_1d(np.asarray(self.state, dtype=float))

    @property
    def state_dim(self) -> int:
        return len(self.state)

    @property
    def description(self) -> str:
        return f"point mass at {self.state.tolist()}"

    def sample(self, rng):
        return self.state.copy()

    def contains(self, x):
        return bool(np.array_equal(np.asarray(x, dtype=float), self.state))


def sample_batch(distribution: InitialStateDistribution, size: int, rng) -> np.ndarray:
    return np.stack([distribution.sample(rng) for _ in range(size)])


def deterministic_batch(distribution: InitialStateDistribution, size: int, seed: int) -> np.ndarray:
    """The frozen batch used by the fixed-batch surrogate."""
    return sample_batch(distribution, size, rngmod.substream(seed, rngmod.BATCH))


@dataclass
class ExtendedPopulation(ParticlePopulation):
    """Particles that each carry their own ``(B, n)`` batch of initial states."""

    x0_batches: np.ndarray | None = None

    def __post_init__(self):
        super().__post_init__()
        if self.x0_batches is None:
            raise ValueError("x0_batches is required")
        self.x0_batches = np.asarray(self.x0_batches, dtype=float)
        if self.x0_batches.ndim != 3 or len(self.x0_batches) != self.n_particles or self.x0_batches.shape[1] < 1:
            raise ValueError("x0_batches must be (N, B, n) with B >= 1")

    @property
    def batch_size(self) -> int:
        return self.x0_batches.shape[1]

    def take(self, idx):
        # Ancestors carry their batches with them.
        n = len(idx)
        return self.replace(thetas=self.thetas[idx].copy(), x0_batches=self.x0_batches[idx].copy(),
                            log_weights=np.full(n, -np.log(n)))


def batch_energy(theta, x0_batch, problem: ControlProblem) -> tuple[float, np.ndarray]:
    """Mean rollout cost over a batch of initial states, with its gradient.

    Raises :class:`RolloutDivergence` naming the first diverging batch member.
    """
    x0_batch = np.atleast_2d(np.asarray(x0_batch, dtype=float))
    if len(x0_batch) == 0:
        raise ValueError("batch must be nonempty")
    return RolloutEnergy(problem, x0_batch)(theta)


def refresh_acceptance(cost_increase, beta: float, lam: float, batch_size: int):
    """``min(1, exp(-(J' - J) beta / (lam B)))``; non-finite proposals get 0."""
    delta = np.asarray(cost_increase, dtype=float)
    if beta == 0.0:
        return np.where(np.isnan(delta) | (delta == np.inf), 0.0, 1.0)
    with np.errstate(invalid="ignore", over="ignore"):
        log_a = np.minimum(0.0, -delta * beta / (lam * batch_size))
    return np.where(np.isnan(log_a), 0.0, np.exp(log_a))


def x0_refresh(thetas, x0_batches, problem: ControlProblem, distribution: InitialStateDistribution,
               beta: float, lam: float, rngs) -> tuple[np.ndarray, np.ndarray]:
    """Independence Metropolis-Hastings on every batch member.

    Row ``i`` draws its ``B`` proposals and then ``B`` uniforms from
    ``rngs[i]``.  Returns the new batches and the acceptance mask ``(N, B)``.
    """
    thetas, _ = as_batch(thetas)
    x0_batches = np.asarray(x0_batches, dtype=float)
    N, B, _ = x0_batches.shape
    rngs = rngmod.as_row_rngs(rngs, N)
    proposals = np.empty_like(x0_batches)
    log_u = np.empty((N, B))
    for i, gen in enumerate(rngs):
        proposals[i] = sample_batch(distribution, B, gen)
        log_u[i] = np.log(gen.random(B))
    current, _, bad_cur = batch_costs(problem, thetas, x0_batches, with_grad=False)
    proposed, _, bad_new = batch_costs(problem, thetas, proposals, with_grad=False)
    current = np.where(bad_cur >= 0, np.inf, current)
    proposed = np.where(bad_new >= 0, np.inf, proposed)
    with np.errstate(invalid="ignore"):
        delta = proposed - current
    delta = np.where(np.isinf(proposed), np.inf, delta)
    with np.errstate(divide="ignore"):
        accept = log_u < np.log(refresh_acceptance(delta, beta, lam, B))
    out = np.where(accept[..., None], proposals, x0_batches)
    return out, accept


def conditional_potential(prior: Prior, problem: ControlProblem, x0_batches, beta: float,
                          lam: float) -> PotentialEvaluator:
    """``V(theta_i) = (beta / lam) Jbar_B(theta_i; batch_i) - log p0(theta_i)``,
    each row paired with its own batch."""
    scale = beta / lam

    def value_and_grad(x):
        x, _ = as_batch(x)
        v = -prior.log_density(x)
        g = -prior.grad_log_density(x)
        if scale != 0.0:
            e, de = mean_cost_and_grad(problem, x, x0_batches)
            v = v + scale * e
            g = g + scale * de
        return v, g

    def value(x):
        x, _ = as_batch(x)
        v = -prior.log_density(x)
        if scale != 0.0:
            v = v + scale * mean_cost_and_grad(problem, x, x0_batches, with_grad=False)[0]
        return v

    return PotentialEvaluator(
        value=value,
        gradient=lambda x: value_and_grad(x)[1],
        value_and_grad=value_and_grad,
        subset=lambda idx: conditional_potential(prior, problem, x0_batches[idx], beta, lam),
    )


@dataclass
class ExtendedTemperingModel:
    problem: ControlProblem
    prior: Prior
    distribution: InitialStateDistribution
    kernel: Callable
    config: TsmcConfig
    batch_size: int
    seed: int

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")

    def initialize(self):
        n = self.config.n_particles
        thetas = initial_thetas(self.prior, n, self.seed)
        gens = rngmod.particle_streams(self.seed, (rngmod.BATCH,), range(n))
        batches = np.stack([sample_batch(self.distribution, self.batch_size, g) for g in gens])
        return ExtendedPopulation.uniform(thetas, x0_batches=batches)

    def energies(self, population):
        def run(rows):
            return mean_cost_and_grad(self.problem, population.thetas[rows], population.x0_batches[rows],
                                      with_grad=False)[0]

        return np.concatenate(map_rows(run, population.n_particles, self.config.workers))

    def move(self, population, level):
        lam = self.config.temperature
        potential = conditional_potential(self.prior, self.problem, population.x0_batches, population.beta, lam)
        thetas, stats = rejuvenate(population.thetas, potential, self.kernel, self.seed, level, self.config)

        def refresh(rows):
            gens = rngmod.particle_streams(self.seed, (rngmod.REFRESH, level), rows)
            return x0_refresh(thetas[rows], population.x0_batches[rows], self.problem, self.distribution,
                              population.beta, lam, gens)

        parts = map_rows(refresh, population.n_particles, self.config.workers)
        batches = np.concatenate([p[0] for p in parts])
        accepted = np.concatenate([p[1] for p in parts])
        stats["refresh_acceptance_rate"] = float(accepted.mean())
        return population.replace(thetas=thetas, x0_batches=batches), stats


def run_extended_tsmc(problem: ControlProblem, prior: Prior, distribution: InitialStateDistribution, kernel,
                      config: TsmcConfig, batch_size: int, seed: int) -> RunRecord:
    """Extended-space tempered SMC over ``(theta, initial-state batch)``."""
    model = ExtendedTemperingModel(problem, prior, distribution, kernel, config, batch_size, seed)
    return run_tempering(model, config, seed)


def run_batch_tsmc(problem: ControlProblem, prior: Prior, distribution: InitialStateDistribution, kernel,
                   config: TsmcConfig, batch_size: int, seed: int) -> RunRecord:
    """Tempered SMC on the cost averaged over one frozen batch of initial states."""
    batch = deterministic_batch(distribution, batch_size, seed)
    record = run_tsmc(RolloutEnergy(problem, batch), prior, kernel, config, seed)
    record.diagnostics["batch"] = batch
    return record

