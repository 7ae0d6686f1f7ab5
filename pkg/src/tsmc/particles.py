"""Weighted particle populations and the adaptive tempering loop."""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np
from scipy.special import logsumexp

from . import rng as rngmod
from .mcmc import KernelResult
from .targets import EnergyModel, Prior, TemperedTarget, tempered_potential

log = logging.getLogger(__name__)

BISECTION_TOL = 1e-6
STALL_STEP = 1e-6
QUANTILES = (0.0, 0.25, 0.5, 0.75, 1.0)


class WeightDegeneracyError(FloatingPointError):
    """All importance weights vanished or became non-finite."""


class ScheduleError(ValueError):
    """A tempering step tried to decrease beta."""


@dataclass
class ParticlePopulation:
    thetas: np.ndarray
    log_weights: np.ndarray
    beta: float = 0.0
    step: int = 0

    def __post_init__(self):
        self.thetas = np.asarray(self.thetas, dtype=float)
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        if self.thetas.ndim != 2:
            raise ValueError("thetas must be an (N, d) array")
        n, d = self.thetas.shape
        if n < 2 or d < 1:
            raise ValueError(f"need N >= 2 and d >= 1, got N={n}, d={d}")
        if self.log_weights.shape != (n,):
            raise ValueError("log_weights must have one entry per particle")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")

    @classmethod
    def uniform(cls, thetas, beta: float = 0.0, step: int = 0, **extra):
        thetas = np.asarray(thetas, dtype=float)
        n = len(thetas)
        return cls(thetas=thetas, log_weights=np.full(n, -np.log(n)), beta=beta, step=step, **extra)

    @property
    def n_particles(self) -> int:
        return self.thetas.shape[0]

    @property
    def dim(self) -> int:
        return self.thetas.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def take(self, idx) -> "ParticlePopulation":
        """Copy the rows ``idx`` (ancestors) and reset to uniform weights."""
        n = len(idx)
        return self.replace(thetas=self.thetas[idx].copy(), log_weights=np.full(n, -np.log(n)))


@dataclass(frozen=True)
class TsmcConfig:
    n_particles: int = 100
    ess_ratio: float = 0.8
    temperature: float = 1.0
    max_steps: int = 500
    moves_per_level: int = 1
    resampling_scheme: str = "systematic"
    workers: int = 1

    def __post_init__(self):
        if not 0.0 < self.ess_ratio < 1.0:
            raise ValueError("ess_ratio must lie in (0, 1)")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.n_particles < 2:
            raise ValueError("n_particles must be >= 2")
        if self.moves_per_level < 1:
            raise ValueError("moves_per_level must be >= 1")
        if self.resampling_scheme not in ("systematic", "multinomial"):
            raise ValueError(f"unknown resampling scheme {self.resampling_scheme!r}")
        if self.max_steps < 1 or self.workers < 1:
            raise ValueError("max_steps and workers must be >= 1")


@dataclass
class RunRecord:
    """Everything a run produced; level 0 is the initial (prior) population."""

    beta_schedule: list[float]
    ess_trace: list[float]
    energies: list[np.ndarray]
    log_z_estimate: float
    final_population: ParticlePopulation
    acceptance_rates: list[float]
    stalled: list[bool] = field(default_factory=list)
    status: str = "success"
    diagnostics: dict = field(default_factory=dict)

    @property
    def energy_quantiles(self) -> list[np.ndarray]:
        return [np.quantile(e[np.isfinite(e)], QUANTILES) if np.isfinite(e).any() else np.full(len(QUANTILES), np.inf)
                for e in self.energies]

    @property
    def n_levels(self) -> int:
        return len(self.beta_schedule) - 1


def normalize_log_weights(log_weights) -> np.ndarray:
    lw = np.asarray(log_weights, dtype=float)
    total = logsumexp(lw)
    if not np.isfinite(total):
        raise WeightDegeneracyError("log-weights do not normalise (all zero or non-finite)")
    return lw - total


def ess(log_weights) -> float:
    """Effective sample size ``1 / sum w_i^2`` of normalised weights."""
    lw = np.asarray(log_weights, dtype=float)
    if np.any(np.isnan(lw)) or np.any(lw == np.inf):
        raise WeightDegeneracyError("non-finite weight")
    lw = normalize_log_weights(lw)
    value = float(np.exp(-logsumexp(2.0 * lw)))
    return min(max(value, 1.0), float(len(lw)))


def _incremented(log_weights, energies, dbeta, lam):
    e = np.asarray(energies, dtype=float)
    if np.any(np.isnan(e)):
        raise WeightDegeneracyError("NaN energy")
    if dbeta == 0.0:
        return np.array(log_weights, dtype=float)
    with np.errstate(invalid="ignore"):
        inc = -(dbeta / lam) * e
    return log_weights + inc


def reweight(population: ParticlePopulation, energies, beta_new: float, lam: float):
    """Move the weights from ``population.beta`` to ``beta_new``.

    Returns the reweighted population and the log of the weighted mean
    incremental weight (this level's contribution to ``log Z``).
    """
    if beta_new < population.beta:
        raise ScheduleError(f"beta cannot decrease ({population.beta} -> {beta_new})")
    lw = _incremented(population.log_weights, energies, beta_new - population.beta, lam)
    log_increment = float(logsumexp(lw) - logsumexp(population.log_weights))
    return population.replace(log_weights=normalize_log_weights(lw), beta=float(beta_new)), log_increment


def find_next_beta(population: ParticlePopulation, energies, config: TsmcConfig) -> tuple[float, bool]:
    """Largest ``beta' <= 1`` keeping ESS >= ``rho N`` after reweighting.

    Returns ``(beta', stalled)``; ``stalled`` is set when no admissible
    ``beta' > beta`` exists and beta was forced forward by ``STALL_STEP``.
    """
    beta, lam = population.beta, config.temperature
    target = config.ess_ratio * population.n_particles

    def ess_at(b):
        lw = _incremented(population.log_weights, energies, b - beta, lam)
        if not np.isfinite(logsumexp(lw)):
            return 0.0
        return ess(lw)

    if ess_at(1.0) >= target:
        return 1.0, False
    lo, hi = beta, 1.0
    while hi - lo > BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if ess_at(mid) >= target:
            lo = mid
        else:
            hi = mid
    if lo <= beta:
        return min(beta + STALL_STEP, 1.0), True
    return lo, False


def resample_indices(weights, rng: np.random.Generator, scheme: str = "systematic") -> np.ndarray:
    """Ancestor indices drawn from normalised ``weights``."""
    w = np.asarray(weights, dtype=float)
    n = len(w)
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    if scheme == "systematic":
        u = (rng.random() + np.arange(n)) / n
    elif scheme == "multinomial":
        u = rng.random(n)
    else:
        raise ValueError(f"unknown resampling scheme {scheme!r}")
    return np.minimum(np.searchsorted(cdf, u, side="right"), n - 1)


def resample(population: ParticlePopulation, rng: np.random.Generator, scheme: str = "systematic"):
    idx = resample_indices(population.weights, rng, scheme)
    return population.take(idx)


def map_rows(fn: Callable[[np.ndarray], object], n: int, workers: int = 1) -> list:
    """Apply ``fn`` to contiguous row chunks, possibly on a thread pool."""
    if workers <= 1 or n < 2:
        return [fn(np.arange(n))]
    chunks = [c for c in np.array_split(np.arange(n), min(workers, n)) if c.size]
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        return list(pool.map(fn, chunks))


def concat_kernel_results(parts: list[KernelResult]) -> KernelResult:
    return KernelResult(*(np.concatenate(f) for f in zip(*parts)))


class TemperingModel(Protocol):
    """What the tempering loop needs from a concrete sampler."""

    def initialize(self) -> ParticlePopulation: ...

    def energies(self, population: ParticlePopulation) -> np.ndarray: ...

    def move(self, population: ParticlePopulation, level: int) -> tuple[ParticlePopulation, dict]: ...


def initial_thetas(prior: Prior, n: int, seed: int) -> np.ndarray:
    """Prior draws shared by every method run with the same seed."""
    return np.stack([prior.sample(g) for g in rngmod.particle_streams(seed, (rngmod.INIT, 0), range(n))])


def rejuvenate(thetas, potential, kernel, seed: int, level: int, config: TsmcConfig):
    """Apply ``config.moves_per_level`` kernel sweeps to every row.

    Row ``i`` in sweep ``s`` draws from stream ``(MOVE, level, s, i)``; the
    potential is restricted to each worker's rows, so chunking never changes
    the result.
    """
    accepted, n_div = [], 0
    n = len(thetas)
    for sweep in range(config.moves_per_level):
        def run(rows, thetas=thetas, sweep=sweep):
            gens = rngmod.particle_streams(seed, (rngmod.MOVE, level, sweep), rows)
            return kernel(thetas[rows], potential.rows(rows), gens)

        res = concat_kernel_results(map_rows(run, n, config.workers))
        thetas = res.theta
        accepted.append(res.accepted.mean())
        n_div += int(res.diverged.sum())
    return thetas, {"acceptance_rate": float(np.mean(accepted)), "divergent": n_div}


@dataclass
class StaticTemperingModel:
    prior: Prior
    energy: EnergyModel
    kernel: Callable
    config: TsmcConfig
    seed: int

    def initialize(self):
        return ParticlePopulation.uniform(initial_thetas(self.prior, self.config.n_particles, self.seed))

    def energies(self, population):
        parts = map_rows(lambda rows: self.energy.energy(population.thetas[rows]),
                         population.n_particles, self.config.workers)
        return np.concatenate(parts)

    def move(self, population, level):
        target = TemperedTarget(self.prior, self.energy, population.beta, self.config.temperature)
        thetas, stats = rejuvenate(population.thetas, tempered_potential(target), self.kernel,
                                   self.seed, level, self.config)
        return population.replace(thetas=thetas), stats


def run_tempering(model: TemperingModel, config: TsmcConfig, seed: int) -> RunRecord:
    """Reweight / resample / move until beta reaches 1."""
    pop = model.initialize()
    energies = model.energies(pop)
    n = pop.n_particles
    record = RunRecord(beta_schedule=[0.0], ess_trace=[float(n)], energies=[energies],
                       log_z_estimate=0.0, final_population=pop, acceptance_rates=[float("nan")],
                       stalled=[False], diagnostics={"divergent": [0], "levels": []})
    log_z = 0.0
    level = 0
    while pop.beta < 1.0:
        if level >= config.max_steps:
            record.status = "partial"
            log.warning("max_steps=%d reached at beta=%.6g", config.max_steps, pop.beta)
            break
        level += 1
        beta_new, stalled = find_next_beta(pop, energies, config)
        pop, log_inc = reweight(pop, energies, beta_new, config.temperature)
        log_z += log_inc
        ess_value = ess(pop.log_weights)
        pop = resample(pop, rngmod.substream(seed, rngmod.RESAMPLE, level), config.resampling_scheme)
        pop, stats = model.move(pop, level)
        pop = pop.replace(step=level)
        energies = model.energies(pop)

        record.beta_schedule.append(pop.beta)
        record.ess_trace.append(ess_value)
        record.energies.append(energies)
        record.acceptance_rates.append(stats.pop("acceptance_rate"))
        record.stalled.append(stalled)
        record.diagnostics["divergent"].append(stats.pop("divergent", 0))
        record.diagnostics["levels"].append(stats)
        log.debug("level %d beta=%.6g ess=%.1f acc=%.3f", level, pop.beta, ess_value, record.acceptance_rates[-1])

    record.log_z_estimate = log_z
    record.final_population = pop
    return record


def run_tsmc(target: EnergyModel, prior: Prior, kernel, config: TsmcConfig, seed: int) -> RunRecord:
    """Tempered SMC from ``prior`` to ``prior * exp(-E / lambda)``."""
    model = StaticTemperingModel(prior, target, kernel, config, seed)
    return run_tempering(model, config, seed)
