"""Tempered sequential Monte Carlo for trajectory and policy optimization."""

from .mcmc import HMC, MALA, HmcConfig, hmc_step, leapfrog, mala_step
from .particles import (
    ParticlePopulation,
    RunRecord,
    TsmcConfig,
    ess,
    find_next_beta,
    resample,
    reweight,
    run_tsmc,
)
from .targets import (
    Ar1ControlPrior,
    FunctionEnergy,
    GaussianIidPrior,
    PotentialEvaluator,
    TemperedTarget,
    quadratic_energy,
    tempered_potential,
)

__version__ = "0.1.0"
