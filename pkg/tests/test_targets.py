import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsmc.envs import ShekelEnergy
from tsmc.gradcheck import central_difference, relative_error
from tsmc.targets import (
    Ar1ControlPrior,
    GaussianIidPrior,
    TemperedTarget,
    quadratic_energy,
    tempered_potential,
)


def test_ar1_gamma_zero_is_iid():
    ar = Ar1ControlPrior(gamma=0.0, sigma=0.7, horizon=12, control_dim=2)
    iid = GaussianIidPrior.standard(24, 0.7)
    th = np.random.default_rng(0).standard_normal((5, 24))
    np.testing.assert_allclose(ar.log_density(th), iid.log_density(th))


def test_ar1_zero_sequence():
    ar = Ar1ControlPrior(0.9, 0.3, horizon=30)
    assert ar.log_density(np.zeros(30)) == pytest.approx(-15 * np.log(2 * np.pi * 0.09))


@pytest.mark.parametrize("stationary", [False, True])
def test_ar1_gradient_matches_differences(stationary):
    ar = Ar1ControlPrior(0.9, 0.3, horizon=30, stationary=stationary)
    th = np.random.default_rng(1).standard_normal(30)
    fd = central_difference(ar.log_density, th)
    assert relative_error(ar.grad_log_density(th), fd) < 1e-6


def test_ar1_dimension_mismatch():
    with pytest.raises(ValueError):
        Ar1ControlPrior(horizon=5).log_density(np.zeros(4))


def test_ar1_lag_one_autocorrelation():
    ar = Ar1ControlPrior(0.9, 0.3, horizon=500, stationary=True)
    rng = np.random.default_rng(2)
    u = np.stack([ar.sample(rng) for _ in range(200)])
    r = np.sum(u[:, :-1] * u[:, 1:]) / np.sum(u[:, :-1] ** 2)
    assert r == pytest.approx(0.9, abs=0.01)


@pytest.mark.parametrize("prior", [GaussianIidPrior(np.array([1.0, -2.0]), 0.5),
                                   Ar1ControlPrior(0.9, 0.3, horizon=4)])
def test_prior_sample_mean(prior):
    rng = np.random.default_rng(3)
    draws = np.stack([prior.sample(rng) for _ in range(100_000)])
    mean = prior.mean if isinstance(prior, GaussianIidPrior) else np.zeros(prior.dim)
    se = draws.std(axis=0) / np.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 3 * se + 1e-12)


def test_gaussian_prior_gradient():
    p = GaussianIidPrior(np.array([0.5, -1.0, 2.0]), 1.7)
    th = np.random.default_rng(4).standard_normal(3)
    assert relative_error(p.grad_log_density(th), central_difference(p.log_density, th)) < 1e-6


def test_tempered_potential_beta_zero_is_prior():
    prior = GaussianIidPrior.standard(2)
    pot = tempered_potential(TemperedTarget(prior, ShekelEnergy(), 0.0, 0.1))
    th = np.random.default_rng(5).standard_normal((6, 2))
    np.testing.assert_array_equal(pot.value(th), -prior.log_density(th))


@given(st.floats(0, 0.5), st.floats(0, 0.5))
@settings(max_examples=40)
def test_tempered_potential_affine_in_beta(b1, b2):
    prior, energy = GaussianIidPrior.standard(2), ShekelEnergy()
    th = np.array([[0.3, -1.2], [2.0, 1.5]])

    def V(b):
        return tempered_potential(TemperedTarget(prior, energy, b, 0.1)).value(th)

    np.testing.assert_allclose(V(b1) + V(b2), V(b1 + b2) + V(0.0), rtol=1e-12, atol=1e-9)


def test_tempered_potential_gradient_on_shekel():
    pot = tempered_potential(TemperedTarget(GaussianIidPrior.standard(2), ShekelEnergy(), 0.6, 0.1))
    rng = np.random.default_rng(6)
    for th in rng.uniform(-4, 4, (20, 2)):
        assert relative_error(pot.gradient(th), central_difference(pot.value, th)) < 1e-5


def test_quadratic_energy():
    e = quadratic_energy(np.diag([2.0, 0.5]))
    assert e.energy(np.array([1.0, 2.0])) == pytest.approx(2.0)
    _, g = e.energy_and_grad(np.array([1.0, 2.0]))
    np.testing.assert_allclose(g, [2.0, 1.0])


def test_target_validation():
    with pytest.raises(ValueError):
        TemperedTarget(GaussianIidPrior.standard(1), quadratic_energy([[1.0]]), 1.5, 1.0)
    with pytest.raises(ValueError):
        TemperedTarget(GaussianIidPrior.standard(1), quadratic_energy([[1.0]]), 0.5, 0.0)
