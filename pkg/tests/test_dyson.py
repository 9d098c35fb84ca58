"""Generator algebra, SDE integrator behavior, and two-route ensemble
agreement for the eigenvalue diffusion."""

import numpy as np
import pytest

from purisim import RngStream
from purisim.dyson import (
    DegenerateSpectrum,
    apply_generator_to_purity,
    euler_maruyama_step,
    generator_coefficients,
    generator_quadratic_form,
    microscopic_comparison,
    run_sde_ensemble,
)
from purisim.manybody import rank2_theory_purity


def random_spectrum(d, gen):
    lam = gen.dirichlet(np.ones(d))
    while np.min(np.diff(np.sort(lam))) < 1e-6:
        lam = gen.dirichlet(np.ones(d))
    return lam


class TestGeneratorCoefficients:
    def test_pure_state_fixed_point(self):
        mu, sigma = generator_coefficients(np.array([1.0]))
        assert mu.shape == (1,) and abs(mu[0]) < 1e-15
        assert abs(sigma[0, 0]) < 1e-15

    def test_two_level_drift(self):
        mu, _ = generator_coefficients(np.array([0.75, 0.25]))
        assert abs(mu[0] - 0.375) < 1e-15
        assert abs(mu[1] + 0.375) < 1e-15

    def test_conservation_structure(self):
        gen = RngStream(60).generator()
        for d in (2, 4, 8):
            for _ in range(100):
                lam = random_spectrum(d, gen)
                mu, sigma = generator_coefficients(lam)
                assert abs(mu.sum()) < 1e-10
                assert np.max(np.abs(sigma @ np.ones(d))) < 1e-10
                assert np.max(np.abs(sigma - sigma.T)) < 1e-14

    def test_drift_pair_antisymmetry(self):
        # pair (a,b) contributes opposite amounts to mu_a and mu_b
        lam = np.array([0.6, 0.3, 0.1])
        contrib = lambda a, b: lam[a] * lam[b] / (lam[a] - lam[b])
        assert contrib(0, 1) == -contrib(1, 0)

    def test_degenerate_rejected(self):
        with pytest.raises(DegenerateSpectrum):
            generator_coefficients(np.array([0.5, 0.5]))

    def test_annihilates_functions_of_sum(self):
        # F = f(sum lam): grad = f' 1, hess = f'' 11^T
        gen = RngStream(61).generator()
        for _ in range(50):
            lam = random_spectrum(5, gen)
            fp, fpp = gen.standard_normal(2)
            d = lam.size
            val = generator_quadratic_form(lam, fp * np.ones(d), fpp * np.ones((d, d)))
            assert abs(val) < 1e-12


class TestPurityIdentity:
    def test_pure(self):
        assert abs(apply_generator_to_purity(np.array([1.0]))) < 1e-15

    def test_flat_quarter(self):
        lam = np.full(4, 0.25)
        assert abs(apply_generator_to_purity(lam) - 0.9375) < 1e-15

    def test_matches_quadrature(self):
        gen = RngStream(62).generator()
        for _ in range(1000):
            d = int(gen.integers(2, 9))
            lam = random_spectrum(d, gen)
            grad = 2 * lam
            hess = 2 * np.eye(d)
            quad = generator_quadratic_form(lam, grad, hess)
            assert abs(quad - apply_generator_to_purity(lam)) < 1e-12

    def test_matches_measured_drift_structure(self):
        # closed form equals N * (measured mean - t2) = 1 - 2 t3 + t2^2
        gen = RngStream(63).generator()
        for _ in range(1000):
            lam = random_spectrum(4, gen)
            t2, t3 = np.sum(lam**2), np.sum(lam**3)
            expect = 1 - 2 * t3 + t2**2
            assert abs(apply_generator_to_purity(lam) - expect) < 1e-12


class TestEulerMaruyama:
    def test_pure_state_deterministic(self):
        lam = euler_maruyama_step(np.array([1.0]), 1e-3, RngStream(64))
        assert np.allclose(lam, [1.0], atol=1e-12)

    def test_sum_preserved(self):
        gen = RngStream(65).generator()
        lam = np.array([0.5, 0.3, 0.2])
        for _ in range(200):
            lam = euler_maruyama_step(lam, 1e-3, gen)
            assert abs(lam.sum() - 1.0) < 1e-9

    def test_degenerate_start_is_perturbed_not_fatal(self):
        lam = euler_maruyama_step(np.array([0.5, 0.5]), 1e-3, RngStream(66))
        assert abs(lam.sum() - 1.0) < 1e-12

    def test_invalid_dt(self):
        with pytest.raises(ValueError):
            euler_maruyama_step(np.array([1.0]), 0.0, RngStream(0))


class TestSdeEnsemble:
    def test_rank2_tracks_theory(self):
        # dt = 1/1000, d=2 flat start: mean purity follows the closed form
        n = 1000
        ens = run_sde_ensemble(np.array([0.5, 0.5]), 1 / n, 200, 1000, seed=67)
        for t in (50, 100, 200):
            theory = rank2_theory_purity(t, n, "measurement")
            assert abs(ens.mean_purity[t] - theory) / theory < 0.02

    def test_level_repulsion_keeps_gap_open(self):
        # start with gap 1e-3; the drift keeps >= 99% of walkers off the
        # 1e-8 degeneracy floor over 10^3 steps
        ens = run_sde_ensemble(
            np.array([0.5 + 5e-4, 0.5 - 5e-4]), 1e-3, 1000, 400, seed=68
        )
        assert ens.walkers_hit_degeneracy / 400 < 0.01

    def test_conservation_and_positivity(self):
        ens = run_sde_ensemble(np.array([0.4, 0.35, 0.25]), 1e-3, 500, 200, seed=69)
        assert np.max(np.abs(ens.final_spectra.sum(axis=1) - 1.0)) < 1e-9
        assert ens.final_spectra.min() >= -1e-9


class TestMicroscopicComparison:
    def test_rank1_trivial(self):
        rep = microscopic_comparison(1, 200, 10, 20, seed=70)
        assert rep["max_rel_purity_dev"] < 1e-12

    def test_rank2_agreement_short(self):
        rep = microscopic_comparison(2, 400, 60, 300, seed=71)
        assert rep["max_rel_purity_dev"] < 0.02
        assert rep["sum_conservation_ok"]

    def test_precondition_checks(self):
        with pytest.raises(ValueError):
            microscopic_comparison(9, 2000, 10, 10, seed=0)
        with pytest.raises(ValueError):
            microscopic_comparison(4, 100, 10, 10, seed=0)
