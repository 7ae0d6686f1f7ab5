import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsmc.baselines import (
    MppiConfig,
    mode_membership,
    mppi_combine,
    mppi_update,
    mppi_weights,
    run_mppi,
    run_parallel_chains,
)
from tsmc.envs import ShekelEnergy
from tsmc.mcmc import HMC, HmcConfig
from tsmc.particles import TsmcConfig, initial_thetas, run_tsmc
from tsmc.targets import GaussianIidPrior, quadratic_energy


def test_equal_costs_give_plain_average():
    rng = np.random.default_rng(0)
    noise = rng.standard_normal((8, 3))
    out, ok = mppi_combine(np.ones(3), noise, np.full(8, 2.5), MppiConfig(noise_sigma=0.4))
    assert ok
    np.testing.assert_allclose(out, np.ones(3) + 0.4 * noise.mean(axis=0), rtol=1e-14)


def test_single_rollout_returns_its_sample():
    noise = np.array([[0.3, -1.0]])
    out, _ = mppi_combine(np.zeros(2), noise, np.array([7.0]), MppiConfig(n_rollouts=1, noise_sigma=2.0))
    np.testing.assert_allclose(out, [0.6, -2.0])


def test_cold_limit_picks_argmin():
    rng = np.random.default_rng(1)
    noise, costs = rng.standard_normal((16, 2)), rng.uniform(0, 1, 16)
    out, _ = mppi_combine(np.zeros(2), noise, costs, MppiConfig(temperature=1e-8, noise_sigma=1.0))
    np.testing.assert_allclose(out, noise[np.argmin(costs)], atol=1e-6)


@given(st.floats(-1e6, 1e6))
@settings(max_examples=50)
def test_weights_shift_invariant(shift):
    costs = np.array([0.2, 1.5, 0.7, 3.0])
    np.testing.assert_allclose(mppi_weights(costs + shift, 0.5), mppi_weights(costs, 0.5), rtol=1e-6, atol=1e-12)


def test_weights_survive_huge_costs():
    w = mppi_weights(np.array([1e300, 1e300 + 1e285, np.inf]), 1e-3)
    assert np.all(np.isfinite(w)) and w.sum() == pytest.approx(1.0) and w[2] == 0.0


def test_all_non_finite_keeps_nominal():
    out, ok = mppi_combine(np.arange(3.0), np.ones((4, 3)), np.full(4, np.nan), MppiConfig())
    assert not ok
    np.testing.assert_array_equal(out, np.arange(3.0))


def test_mppi_update_decreases_quadratic():
    energy = quadratic_energy(np.eye(2))
    theta, rng = np.array([3.0, -3.0]), np.random.default_rng(2)
    for _ in range(30):
        theta, _ = mppi_update(theta, energy, MppiConfig(n_rollouts=64, noise_sigma=0.3, temperature=0.1), rng)
    assert energy.energy(theta) < 0.1


def test_mppi_run_workers_and_shape():
    energy, prior = quadratic_energy(np.eye(2)), GaussianIidPrior.standard(2)
    cfg = MppiConfig(n_rollouts=8, n_updates=5)
    a = run_mppi(energy, prior, cfg, 10, seed=3)
    b = run_mppi(energy, prior, cfg, 10, seed=3, workers=4)
    assert len(a.energies) == 6
    np.testing.assert_array_equal(a.final_population.thetas, b.final_population.thetas)
    np.testing.assert_array_equal(a.energies[0], energy.energy(initial_thetas(prior, 10, 3)))


def test_mppi_config_validation():
    with pytest.raises(ValueError):
        MppiConfig(n_rollouts=0)
    with pytest.raises(ValueError):
        MppiConfig(temperature=0.0)


def test_chains_with_no_budget_return_prior_draws():
    energy, prior = ShekelEnergy(), GaussianIidPrior.standard(2)
    rec = run_parallel_chains(energy, prior, HMC(HmcConfig(0.1, 5)), TsmcConfig(n_particles=12), 0, seed=4)
    np.testing.assert_array_equal(rec.final_population.thetas, initial_thetas(prior, 12, 4))


def test_all_methods_start_from_same_particles():
    energy, prior = ShekelEnergy(), GaussianIidPrior.standard(2)
    cfg = TsmcConfig(n_particles=20, temperature=0.1)
    smc = run_tsmc(energy, prior, HMC(HmcConfig(0.1, 5)), cfg, seed=6)
    chains = run_parallel_chains(energy, prior, HMC(HmcConfig(0.1, 5)), cfg, 2, seed=6)
    mppi = run_mppi(energy, prior, MppiConfig(n_updates=1), 20, seed=6)
    np.testing.assert_array_equal(smc.energies[0], chains.energies[0])
    np.testing.assert_array_equal(smc.energies[0], mppi.energies[0])


def test_chains_sample_gaussian_posterior():
    # prior N(0, I), energy 0.5 |x - 1|^2 with lam = 1 -> posterior N(0.5, 0.5 I)
    class Shifted:
        def energy(self, th):
            return 0.5 * np.sum((np.atleast_2d(th) - 1.0) ** 2, axis=-1)

        def energy_and_grad(self, th):
            th = np.atleast_2d(th)
            return self.energy(th), th - 1.0

    rec = run_parallel_chains(Shifted(), GaussianIidPrior.standard(2), HMC(HmcConfig(0.4, 5)),
                              TsmcConfig(n_particles=1000, temperature=1.0), 60, seed=7, record_every=60)
    th = rec.final_population.thetas
    np.testing.assert_allclose(th.mean(axis=0), 0.5, atol=0.06)
    np.testing.assert_allclose(th.var(axis=0), 0.5, atol=0.07)
    assert len(rec.energies) == 2 and rec.diagnostics["transitions"] == 60


def test_shekel_chains_report_modes():
    rec = run_parallel_chains(ShekelEnergy(), GaussianIidPrior.standard(2), HMC(HmcConfig(0.1, 5)),
                              TsmcConfig(n_particles=30, temperature=0.1), 3, seed=8)
    counts = rec.diagnostics["mode_membership"]
    assert len(counts) == len(ShekelEnergy().centers) and sum(counts) == 30


def test_mode_membership_counts():
    centers = np.array([[0.0, 0.0], [5.0, 5.0]])
    np.testing.assert_array_equal(mode_membership(np.array([[0.1, 0.0], [4.0, 4.0], [6.0, 5.0]]), centers), [1, 2])
