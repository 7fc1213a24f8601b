import math

import numpy as np
import pytest

from conftest import BOX, POTENTIALS
from gcdual import DomainError, ThermoParams, gc_sample, get_model, ideal_gas
from gcdual.potentials import pair_distances, total_potential
from gcdual.sampler import sample_observables


def test_deterministic_for_fixed_seed():
    p = ThermoParams(-2.5, (0.2, 0, 0), -1.0)
    a = sample_observables(POTENTIALS["square_well"], BOX, p, 50, seed=4)
    b = sample_observables(POTENTIALS["square_well"], BOX, p, 50, seed=4)
    c = sample_observables(POTENTIALS["square_well"], BOX, p, 50, seed=5)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_configurations_are_admissible():
    hs = POTENTIALS["hard_spheres"]
    p = ThermoParams(-1.0, (0, 0, 0), -1.0)
    for c in gc_sample(hs, BOX, p, seed=1, n_samples=100):
        assert np.all((c.positions >= 0) & (c.positions <= 2.0))
        if c.N > 1:
            d = pair_distances(c.positions)
            assert d.min() >= 0.5
        assert c.potential_energy == 0.0
        assert c.H == pytest.approx(0.5 * np.sum(c.velocities**2))


def test_energy_bookkeeping_matches_recomputation():
    lj = POTENTIALS["lennard_jones"]
    p = ThermoParams(-4.5, (0, 0, 0), -0.8)
    for c in gc_sample(lj, BOX, p, seed=2, n_samples=40):
        assert c.potential_energy == pytest.approx(total_potential(lj, c.positions), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("name,mu,beta", [("hard_spheres", -2.0, -1.0), ("square_well", -5.0, -0.3),
                                          ("lennard_jones", -4.5, -0.7)])
def test_mean_particle_number_matches_model(name, mu, beta):
    # independent cross-check of the Rosenbluth surrogate by Markov chain sampling
    pot = POTENTIALS[name]
    p = ThermoParams(mu, (0, 0, 0), beta)
    obs = sample_observables(pot, BOX, p, 20_000, seed=7)
    est = get_model(pot, BOX, beta_ref=beta).evaluate(p, hessian=False)
    batches = obs[:, 0].reshape(40, -1).mean(axis=1)
    sigma = math.hypot(batches.std(ddof=1) / math.sqrt(40), est.stat_error[1] * BOX.volume)
    assert abs(obs[:, 0].mean() - est.grad[0] * BOX.volume) < 4 * sigma


def test_velocity_distribution():
    lam, beta = np.array([0.6, 0.0, -0.3]), -2.0
    p = ThermoParams(0.0, lam, beta)
    v = np.vstack([c.velocities for c in gc_sample(ideal_gas(), BOX, p, seed=3, n_samples=300)])
    assert np.allclose(v.mean(axis=0), -lam / beta, atol=4 * math.sqrt(1 / 2.0 / len(v)))
    assert v.var(axis=0) == pytest.approx(np.full(3, 0.5), rel=0.05)


def test_rejects_nonnegative_beta():
    with pytest.raises(DomainError):
        next(gc_sample(ideal_gas(), BOX, ThermoParams(0.0, (0, 0, 0), 1.0)))
