import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tsmc import rng as rngmod
from tsmc.mcmc import HMC, HmcConfig
from tsmc.particles import (
    ParticlePopulation,
    ScheduleError,
    TsmcConfig,
    WeightDegeneracyError,
    ess,
    find_next_beta,
    map_rows,
    resample,
    resample_indices,
    reweight,
    run_tsmc,
)
from tsmc.envs import ShekelEnergy
from tsmc.targets import GaussianIidPrior, zero_energy

log_weights = arrays(np.float64, st.integers(2, 40), elements=st.floats(-30, 30))


def test_ess_examples():
    assert ess(np.log(np.full(8, 1 / 8))) == pytest.approx(8.0)
    with np.errstate(divide="ignore"):
        assert ess(np.log(np.eye(8)[3])) == pytest.approx(1.0)
        assert ess(np.log([0.5, 0.5, 0.0, 0.0])) == pytest.approx(2.0)


def test_ess_rejects_nan():
    with pytest.raises(WeightDegeneracyError):
        ess(np.array([0.0, np.nan]))


@given(log_weights)
def test_ess_bounds(lw):
    value = ess(lw)
    assert 1.0 - 1e-12 <= value <= len(lw) + 1e-9


@given(log_weights, st.floats(-1e3, 1e3), st.floats(1e-3, 1.0))
def test_reweight_shift_invariant(energies, c, dbeta):
    pop = ParticlePopulation.uniform(np.zeros((len(energies), 1)))
    a, _ = reweight(pop, energies, dbeta, 1.0)
    b, _ = reweight(pop, energies + c, dbeta, 1.0)
    np.testing.assert_allclose(a.weights, b.weights, rtol=1e-9, atol=1e-12)
    assert a.weights.sum() == pytest.approx(1.0)


def test_reweight_zero_step_keeps_weights():
    pop = ParticlePopulation(np.zeros((3, 1)), np.log([0.2, 0.3, 0.5]), beta=0.4)
    new, inc = reweight(pop, np.array([1.0, 5.0, -2.0]), 0.4, 0.7)
    np.testing.assert_allclose(new.weights, [0.2, 0.3, 0.5])
    assert inc == pytest.approx(0.0)


def test_reweight_two_particles_by_hand():
    lam, dbeta = 0.3, 0.25
    pop = ParticlePopulation.uniform(np.zeros((2, 1)))
    new, _ = reweight(pop, np.array([0.0, lam * np.log(2) / dbeta]), dbeta, lam)
    np.testing.assert_allclose(new.weights, [2 / 3, 1 / 3])
    np.testing.assert_array_equal(new.thetas, pop.thetas)


def test_reweight_rejects_decreasing_beta():
    pop = ParticlePopulation.uniform(np.zeros((2, 1)), beta=0.5)
    with pytest.raises(ScheduleError):
        reweight(pop, np.zeros(2), 0.4, 1.0)


def test_log_increment_is_log_mean_weight():
    e = np.array([0.0, 1.0, 2.0, 3.0])
    pop = ParticlePopulation.uniform(np.zeros((4, 1)))
    _, inc = reweight(pop, e, 0.5, 2.0)
    assert inc == pytest.approx(np.log(np.mean(np.exp(-0.25 * e))))


def test_find_next_beta_equal_energies():
    pop = ParticlePopulation.uniform(np.zeros((10, 1)))
    assert find_next_beta(pop, np.full(10, 3.0), TsmcConfig(n_particles=10)) == (1.0, False)


def test_find_next_beta_hits_target():
    cfg = TsmcConfig(n_particles=50, ess_ratio=0.8, temperature=0.1)
    energies = np.linspace(0.0, 5.0, 50)
    pop = ParticlePopulation.uniform(np.zeros((50, 1)))
    beta, stalled = find_next_beta(pop, energies, cfg)
    assert not stalled and 0 < beta < 1
    assert ess(reweight(pop, energies, beta, 0.1)[0].log_weights) >= 0.8 * 50 - 1
    assert ess(reweight(pop, energies, beta + 1e-5, 0.1)[0].log_weights) < 0.8 * 50


def test_find_next_beta_stall_guard():
    # one particle with infinite energy already costs more ESS than allowed
    cfg = TsmcConfig(n_particles=4, ess_ratio=0.9)
    pop = ParticlePopulation.uniform(np.zeros((4, 1)), beta=0.5)
    beta, stalled = find_next_beta(pop, np.array([0.0, 0.0, 0.0, np.inf]), cfg)
    assert stalled and beta == pytest.approx(0.5 + 1e-6)


def test_resample_one_hot():
    w = np.eye(6)[2]
    idx = resample_indices(w, np.random.default_rng(0))
    assert np.all(idx == 2)


def test_systematic_uniform_keeps_everyone():
    idx = resample_indices(np.full(9, 1 / 9), np.random.default_rng(4), "systematic")
    np.testing.assert_array_equal(np.sort(idx), np.arange(9))


@pytest.mark.parametrize("scheme", ["systematic", "multinomial"])
def test_resampling_unbiased(scheme):
    rng = np.random.default_rng(7)
    w = np.array([0.7, 0.3])
    n, reps = len(w), 100_000 if scheme == "multinomial" else 20_000
    counts = np.array([np.sum(resample_indices(w, rng, scheme) == 0) for _ in range(reps)])
    se = counts.std(ddof=1) / np.sqrt(reps)
    assert abs(counts.mean() - 0.7 * n) < 3 * max(se, 1e-12) + 1e-12


@given(arrays(np.float64, st.integers(2, 30), elements=st.floats(0.01, 10.0)), st.integers(0, 2**32 - 1))
@settings(max_examples=50)
def test_resample_preserves_count(raw, seed):
    w = raw / raw.sum()
    for scheme in ("systematic", "multinomial"):
        idx = resample_indices(w, np.random.default_rng(seed), scheme)
        assert len(idx) == len(w) and idx.min() >= 0 and idx.max() < len(w)


def test_resample_resets_weights():
    pop = ParticlePopulation(np.arange(4.0)[:, None], np.log([0.1, 0.2, 0.3, 0.4]))
    new = resample(pop, np.random.default_rng(0))
    np.testing.assert_allclose(new.weights, 0.25)


def test_map_rows_chunking_is_identical():
    fn = lambda rows: rows * 2  # noqa: E731
    whole = np.concatenate(map_rows(fn, 10, 1))
    chunked = np.concatenate(map_rows(fn, 10, 4))
    np.testing.assert_array_equal(whole, chunked)


def test_substreams_depend_only_on_key():
    a = rngmod.substream(3, 1, 2, 5).random(4)
    b = rngmod.particle_streams(3, (1, 2), range(7))[5].random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, rngmod.substream(3, 1, 2, 6).random(4))


def kernel():
    return HMC(HmcConfig(step_size=0.3, max_leapfrog_steps=8))


def test_zero_energy_single_level():
    prior = GaussianIidPrior.standard(2)
    rec = run_tsmc(zero_energy(2), prior, kernel(), TsmcConfig(n_particles=64), seed=1)
    assert rec.beta_schedule == [0.0, 1.0]
    assert rec.log_z_estimate == 0.0
    assert rec.status == "success"


def test_gaussian_covariance_and_logz(gaussian_problem):
    prior, energy = gaussian_problem
    rec = run_tsmc(energy, prior, kernel(), TsmcConfig(n_particles=2048, temperature=1.0), seed=3)
    th = rec.final_population.thetas
    np.testing.assert_allclose(np.var(th, axis=0), [1 / 3, 2 / 3], atol=0.06)
    assert rec.log_z_estimate == pytest.approx(-0.5 * np.log(4.5), abs=0.06)


def test_schedule_monotone_and_ess_bounded():
    cfg = TsmcConfig(n_particles=100, ess_ratio=0.9, temperature=0.1)
    rec = run_tsmc(ShekelEnergy(), GaussianIidPrior.standard(2), HMC(HmcConfig(0.2, 10)), cfg, seed=0)
    b = np.array(rec.beta_schedule)
    assert b[-1] == 1.0 and np.all(np.diff(b) > 0)
    for e, s in zip(rec.ess_trace[1:], rec.stalled[1:]):
        assert 1.0 <= e <= 100
        assert s or e >= 0.9 * 100 - 1


def test_max_steps_gives_partial(gaussian_problem):
    prior, energy = gaussian_problem
    cfg = TsmcConfig(n_particles=64, temperature=0.001, max_steps=2)
    rec = run_tsmc(energy, prior, kernel(), cfg, seed=0)
    assert rec.status == "partial"
    assert rec.beta_schedule[-1] < 1.0 and rec.n_levels == 2


def test_workers_do_not_change_results(gaussian_problem):
    prior, energy = gaussian_problem
    runs = [run_tsmc(energy, prior, kernel(), TsmcConfig(n_particles=60, temperature=0.5, workers=w), seed=9)
            for w in (1, 4)]
    np.testing.assert_array_equal(runs[0].final_population.thetas, runs[1].final_population.thetas)
    assert runs[0].beta_schedule == runs[1].beta_schedule


def test_consistency_improves_with_n(gaussian_problem):
    prior, energy = gaussian_problem
    medians = []
    for n in (256, 1024, 4096):
        errs = [np.linalg.norm(run_tsmc(energy, prior, kernel(), TsmcConfig(n_particles=n), seed=s)
                               .final_population.thetas.mean(axis=0)) for s in range(10)]
        medians.append(np.median(errs))
    assert medians[0] > medians[1] > medians[2]


def test_config_validation():
    with pytest.raises(ValueError):
        TsmcConfig(ess_ratio=1.0)
    with pytest.raises(ValueError):
        TsmcConfig(temperature=0.0)
    with pytest.raises(ValueError):
        TsmcConfig(resampling_scheme="residual")
