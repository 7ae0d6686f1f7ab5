"""Comparison methods started from the same particles as tempered SMC:
independent MCMC chains at the final temperature, and per-particle MPPI."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .particles import (
    ParticlePopulation,
    RunRecord,
    TsmcConfig,
    initial_thetas,
    map_rows,
    rejuvenate,
)
from .targets import EnergyModel, Prior, TemperedTarget, tempered_potential


@dataclass(frozen=True)
class MppiConfig:
    n_rollouts: int = 64
    noise_sigma: float = 0.5
    temperature: float = 1.0
    n_updates: int = 64

    def __post_init__(self):
        if self.n_rollouts < 1:
            raise ValueError("n_rollouts must be >= 1")
        if not (self.noise_sigma > 0 and self.temperature > 0):
            raise ValueError("noise_sigma and temperature must be positive")
        if self.n_updates < 0:
            raise ValueError("n_updates must be >= 0")


def mppi_weights(costs, temperature: float) -> np.ndarray:
    """Softmin weights ``exp(-(c - min c) / lam)`` normalised to one.

    Non-finite costs get zero weight; the caller must handle the case where
    every cost is non-finite.
    """
    c = np.asarray(costs, dtype=float)
    finite = np.isfinite(c)
    w = np.zeros_like(c)
    shifted = (c[finite] - c[finite].min()) / temperature
    w[finite] = np.exp(-shifted)
    return w / w.sum()


def mppi_combine(nominal, noise, costs, config: MppiConfig) -> tuple[np.ndarray, bool]:
    """Weighted average of ``nominal + sigma * noise[k]``; returns the nominal
    unchanged (and ``False``) if no cost is finite."""
    if not np.any(np.isfinite(costs)):
        return np.array(nominal, dtype=float), False
    w = mppi_weights(costs, config.temperature)
    samples = nominal + config.noise_sigma * noise
    return w @ samples, True


def mppi_update(nominal_theta, energy: EnergyModel, config: MppiConfig, rng: np.random.Generator):
    """One gradient-free MPPI update of a single nominal parameter vector."""
    nominal = np.asarray(nominal_theta, dtype=float)
    noise = rng.standard_normal((config.n_rollouts, nominal.size))
    costs = energy.energy(nominal + config.noise_sigma * noise)
    return mppi_combine(nominal, noise, costs, config)


def _population_record(thetas, energies, n):
    return RunRecord(beta_schedule=[1.0], ess_trace=[float(n)], energies=[energies], log_z_estimate=float("nan"),
                     final_population=ParticlePopulation.uniform(thetas, beta=1.0), acceptance_rates=[float("nan")],
                     stalled=[False], diagnostics={"divergent": [0], "levels": []})


def _append_level(record, thetas, energies, acceptance, divergent, extra=None):
    n = len(thetas)
    record.beta_schedule.append(1.0)
    record.ess_trace.append(float(n))
    record.energies.append(energies)
    record.acceptance_rates.append(acceptance)
    record.stalled.append(False)
    record.diagnostics["divergent"].append(divergent)
    record.diagnostics["levels"].append(extra or {})
    record.final_population = ParticlePopulation.uniform(thetas, beta=1.0, step=len(record.energies) - 1)


def run_mppi(energy: EnergyModel, prior: Prior, config: MppiConfig, n_particles: int, seed: int,
             workers: int = 1) -> RunRecord:
    """Run MPPI independently from each initial particle.

    Update ``u`` of particle ``i`` draws its noise from stream ``(MPPI, u, i)``.
    Level ``u`` of the record holds the nominal energies after ``u`` updates.
    """
    thetas = initial_thetas(prior, n_particles, seed)
    record = _population_record(thetas, energy.energy(thetas), n_particles)
    K, d = config.n_rollouts, thetas.shape[1]
    for u in range(1, config.n_updates + 1):
        def run(rows, thetas=thetas, u=u):
            gens = rngmod.particle_streams(seed, (rngmod.MPPI, u), rows)
            noise = np.stack([g.standard_normal((K, d)) for g in gens])
            pts = thetas[rows, None, :] + config.noise_sigma * noise
            costs = energy.energy(pts.reshape(-1, d)).reshape(len(rows), K)
            out = [mppi_combine(thetas[r], noise[j], costs[j], config) for j, r in enumerate(rows)]
            return np.stack([o[0] for o in out]), np.array([not o[1] for o in out])

        parts = map_rows(run, n_particles, workers)
        thetas = np.concatenate([p[0] for p in parts])
        stuck = int(np.concatenate([p[1] for p in parts]).sum())
        _append_level(record, thetas, energy.energy(thetas), float("nan"), stuck)
    record.log_z_estimate = float("nan")
    return record


def mode_membership(thetas, centers) -> np.ndarray:
    """Number of particles whose nearest center is each of ``centers``."""
    thetas, centers = np.atleast_2d(thetas), np.atleast_2d(centers)
    nearest = np.argmin(np.sum((thetas[:, None, :] - centers) ** 2, axis=2), axis=1)
    return np.bincount(nearest, minlength=len(centers))


def run_parallel_chains(energy: EnergyModel, prior: Prior, kernel, config: TsmcConfig, n_steps: int, seed: int,
                        record_every: int = 1) -> RunRecord:
    """``N`` independent chains targeting ``p0 exp(-E / lam)`` directly.

    Chains start from the same draws as tempered SMC with this seed.  Energies
    are recorded after every ``record_every`` transitions.
    """
    if n_steps < 0 or record_every < 1:
        raise ValueError("n_steps must be >= 0 and record_every >= 1")
    thetas = initial_thetas(prior, config.n_particles, seed)
    record = _population_record(thetas, energy.energy(thetas), config.n_particles)
    potential = tempered_potential(TemperedTarget(prior, energy, 1.0, config.temperature))
    done, block = 0, 0
    while done < n_steps:
        sweeps = min(record_every, n_steps - done)
        block += 1
        thetas, stats = rejuvenate(thetas, potential, kernel, seed, block,
                                   dataclasses.replace(config, moves_per_level=sweeps))
        done += sweeps
        _append_level(record, thetas, energy.energy(thetas), stats["acceptance_rate"], stats["divergent"])
    centers = getattr(energy, "centers", None)
    if centers is not None:
        record.diagnostics["mode_membership"] = mode_membership(thetas, centers).tolist()
    record.diagnostics["transitions"] = done
    return record
