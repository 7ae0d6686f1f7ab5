"""Turn an :class:`ExperimentConfig` into a run of the chosen method."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .baselines import MppiConfig, run_mppi, run_parallel_chains
from .config import ExperimentConfig
from .envs import Task, make_task
from .extended import deterministic_batch, run_extended_tsmc
from .mcmc import HMC, MALA, HmcConfig
from .particles import RunRecord, TsmcConfig, run_tsmc
from .rollout import RolloutEnergy

log = logging.getLogger(__name__)

DEFAULT_HMC_STEPS = 50
MALA_BUDGET_FACTOR = 100


@dataclass
class RunResult:
    config: ExperimentConfig
    task: Task
    record: RunRecord
    wall_time: float


def build_task(config: ExperimentConfig) -> Task:
    if config.environment in ("gaussian", "shekel"):
        return make_task(config.environment)
    return make_task(config.environment, controller=config.controller, horizon=config.horizon,
                     policy_sigma=config.policy_sigma)


def task_energy(task: Task, config: ExperimentConfig):
    """Energy shared by every fixed-target method: the static energy, the
    single-start rollout cost, or the cost averaged over the frozen batch."""
    if not task.is_control or task.has_point_start:
        return task.point_energy()
    return RolloutEnergy(task.problem, deterministic_batch(task.distribution, config.batch_size, config.seed))


def tsmc_config(config: ExperimentConfig) -> TsmcConfig:
    return TsmcConfig(n_particles=config.n_particles, ess_ratio=config.ess_ratio, temperature=config.temperature,
                      max_steps=config.max_steps, moves_per_level=config.moves_per_level,
                      resampling_scheme=config.resampling, workers=config.workers)


def hmc_kernel(config: ExperimentConfig) -> HMC:
    return HMC(HmcConfig(step_size=config.step_size, max_leapfrog_steps=config.max_leapfrog_steps))


def execute(config: ExperimentConfig) -> RunResult:
    config.validate()
    task = build_task(config)
    seed = config.seed
    start = time.perf_counter()
    if config.method == "tsmc":
        record = run_tsmc(task_energy(task, config), task.prior, hmc_kernel(config), tsmc_config(config), seed)
    elif config.method == "tsmc_extended":
        record = run_extended_tsmc(task.problem, task.prior, task.distribution, hmc_kernel(config),
                                   tsmc_config(config), config.batch_size, seed)
    elif config.method in ("parallel_hmc", "parallel_mala"):
        hmc = config.method == "parallel_hmc"
        kernel = hmc_kernel(config) if hmc else MALA(config.step_size)
        n_steps = config.n_steps
        if n_steps is None:
            n_steps = DEFAULT_HMC_STEPS * (1 if hmc else MALA_BUDGET_FACTOR)
        record_every = config.record_every or max(1, n_steps // DEFAULT_HMC_STEPS)
        record = run_parallel_chains(task_energy(task, config), task.prior, kernel, tsmc_config(config), n_steps,
                                     seed, record_every)
    else:
        mppi = MppiConfig(n_rollouts=config.mppi_rollouts, noise_sigma=config.mppi_noise,
                          temperature=config.temperature, n_updates=config.mppi_updates)
        record = run_mppi(task_energy(task, config), task.prior, mppi, config.n_particles, seed, config.workers)
    wall = time.perf_counter() - start
    log.info("%s/%s seed %d: %d levels, best energy %.6g, %.2fs", config.environment, config.method, seed,
             record.n_levels, float(np.min(record.energies[-1])), wall)
    return RunResult(config, task, record, wall)
