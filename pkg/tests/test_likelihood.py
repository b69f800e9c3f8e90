import math

import numpy as np
import pytest
import scipy.integrate

from flexnoise import (
    BetaPrior,
    Dataset,
    FlatPrior,
    LogisticModel,
    MvnLikelihood,
    NormalPrior,
    ShiftedGammaPrior,
    SparseCovariance,
    TransformedPrior,
    UniformPrior,
    gp_log_prior,
    herg_default_priors,
    iid_logpdf,
    log_posterior,
    mvn_logpdf,
    normal_prior,
)
from flexnoise.covariance import build_covariance
from flexnoise.kernels import StationaryKernel

LOG_2PI = math.log(2 * math.pi)


class TestMvnLogpdf:
    def test_standard_normal_at_mode(self):
        cov = SparseCovariance(np.array([[1.0]]))
        val = mvn_logpdf(np.array([0.3]), np.array([0.3]), cov)
        assert val == pytest.approx(-0.5 * LOG_2PI)
        assert val == pytest.approx(-0.9189385, abs=1e-7)

    def test_bivariate_identity(self):
        cov = SparseCovariance(np.full((1, 2), 1.0))
        val = mvn_logpdf(np.zeros(2), np.zeros(2), cov)
        assert val == pytest.approx(-LOG_2PI)
        assert val == pytest.approx(-1.8378771, abs=1e-7)

    def test_matches_explicit_inverse_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            a = rng.standard_normal((5, 5))
            dense = a.T @ a + np.eye(5)
            y = rng.standard_normal(5)
            mean = rng.standard_normal(5)
            cov = SparseCovariance.from_dense(dense, threshold=0.0)
            val = mvn_logpdf(y, mean, cov)
            r = y - mean
            oracle = -0.5 * (
                5 * LOG_2PI
                + np.log(np.linalg.det(dense))
                + r @ np.linalg.inv(dense) @ r
            )
            assert val == pytest.approx(oracle, rel=1e-8)

    def test_dimension_mismatch(self):
        cov = SparseCovariance(np.full((1, 3), 1.0))
        with pytest.raises(ValueError):
            mvn_logpdf(np.zeros(2), np.zeros(2), cov)
        with pytest.raises(ValueError):
            mvn_logpdf(np.zeros(3), np.zeros(2), cov)

    def test_diagonal_equals_sum_of_univariate(self):
        rng = np.random.default_rng(1)
        n = 1000
        sigma = 2.7
        cov = SparseCovariance(np.full((1, n), sigma**2))
        y = rng.standard_normal(n)
        mean = rng.standard_normal(n)
        direct = mvn_logpdf(y, mean, cov)
        assert direct == pytest.approx(iid_logpdf(y, mean, sigma), abs=1e-10)
        univariate = sum(
            -0.5 * (LOG_2PI + 2 * np.log(sigma) + ((yi - mi) / sigma) ** 2)
            for yi, mi in zip(y, mean)
        )
        assert direct == pytest.approx(univariate, abs=1e-8 * abs(univariate))

    def test_sparse_and_dense_paths_agree(self):
        rng = np.random.default_rng(2)
        times = np.arange(60.0)
        kernel = StationaryKernel("laplacian", sigma=1.3, length_scale=2.0)
        # threshold 0 keeps every entry, so the two paths see the same matrix
        cov = build_covariance(kernel, times, threshold=0.0)
        dense = kernel(times[:, None], times[None, :])
        y = rng.standard_normal(60)
        assert mvn_logpdf(y, np.zeros(60), cov) == pytest.approx(
            mvn_logpdf(y, np.zeros(60), dense), rel=1e-8
        )


class TestGpLogPrior:
    def test_single_point_at_mean(self):
        val = gp_log_prior(np.array([0.7]), np.array([3.0]), (0.7, 1.0, 2.0))
        assert val == pytest.approx(-0.5 * LOG_2PI)

    def test_distant_points_factorize(self):
        hyper = (0.0, 1.3, 0.5)
        values = np.array([0.4, -0.9])
        joint = gp_log_prior(values, np.array([0.0, 1000.0]), hyper)
        single = sum(
            gp_log_prior(np.array([v]), np.array([0.0]), hyper) for v in values
        )
        assert joint == pytest.approx(single, abs=1e-6)

    def test_matches_dense_mvn_oracle(self):
        rng = np.random.default_rng(3)
        grid = np.sort(rng.uniform(0, 10, size=10))
        # beta well below the typical spacing keeps the Gram well
        # conditioned, so oracle and implementation agree tightly
        mu, alpha, beta = 0.4, 1.5, 0.5
        values = rng.standard_normal(10)
        val = gp_log_prior(values, grid, (mu, alpha, beta))
        gram = alpha**2 * np.exp(-((grid[:, None] - grid[None, :]) ** 2) / (2 * beta**2))
        r = values - mu
        sign, logdet = np.linalg.slogdet(gram)
        oracle = -0.5 * (10 * LOG_2PI + logdet + r @ np.linalg.solve(gram, r))
        assert val == pytest.approx(oracle, rel=1e-8)

    def test_translation_invariance(self):
        rng = np.random.default_rng(4)
        grid = np.sort(rng.uniform(0, 5, size=8))
        values = rng.standard_normal(8)
        hyper = (0.0, 1.0, 0.5)
        a = gp_log_prior(values, grid, hyper)
        b = gp_log_prior(values, grid + 137.0, hyper)
        assert a == pytest.approx(b, abs=1e-10)

    def test_whitening_round_trip(self):
        from flexnoise import SquaredExponentialLogPrior

        rng = np.random.default_rng(5)
        grid = np.linspace(0, 4, 12)
        prior = SquaredExponentialLogPrior(grid, 0.3, 1.1, 1.7)
        values = rng.standard_normal(12)
        u = prior.whiten(values)
        assert np.allclose(prior.unwhiten(u), values, atol=1e-10)
        assert prior.log_density_whitened(u) == pytest.approx(prior(values), rel=1e-12)


class TestPriors:
    def test_beta_uniform_case(self):
        assert BetaPrior(1.0, 1.0).log_density(0.3) == pytest.approx(0.0)

    def test_beta_out_of_support(self):
        assert BetaPrior(2.0, 2.0).log_density(-0.1) == -math.inf
        assert BetaPrior(2.0, 2.0).log_density(1.1) == -math.inf

    def test_normal_sd_convention(self):
        assert NormalPrior(0.0, 4.0).log_density(0.0) == pytest.approx(
            -0.5 * math.log(2 * math.pi * 16.0)
        )

    def test_prior_scale_switch(self):
        sd_read = normal_prior(0.0, 4.0, "sd")
        var_read = normal_prior(0.0, 4.0, "variance")
        assert sd_read.sd == 4.0
        assert var_read.sd == 2.0
        with pytest.raises(ValueError):
            normal_prior(0.0, 4.0, "precision")

    def test_shifted_gamma_against_quadrature(self):
        # normalize exp(unnormalized log kernel) numerically; the
        # substitution x = u^(1/a) removes the x^(a-1) endpoint singularity
        a, b, shift = 0.01, 100.0, -0.4
        prior = ShiftedGammaPrior(a, b, shift)

        def kernel_of_x(x):
            return x ** (a - 1.0) * np.exp(-b * x)

        upper = 10.0

        def integrand(u):
            return (1.0 / a) * np.exp(-b * u ** (1.0 / a))

        norm, err = scipy.integrate.quad(
            integrand, 0.0, upper**a, limit=200, epsabs=1e-13, epsrel=1e-12
        )
        assert err < 1e-9
        for x in (1e-4, 0.01, 0.2):
            expected = math.log(kernel_of_x(x) / norm)
            assert prior.log_density(x + shift) == pytest.approx(expected, abs=1e-6)

    def test_shifted_gamma_support(self):
        prior = ShiftedGammaPrior(0.01, 100.0, shift=-0.5)
        assert prior.log_density(-0.5) == -math.inf
        assert prior.log_density(-0.6) == -math.inf
        assert np.isfinite(prior.log_density(-0.499))

    def test_uniform(self):
        prior = UniformPrior(-1.0, 3.0)
        assert prior.log_density(0.0) == pytest.approx(-math.log(4.0))
        assert prior.log_density(3.5) == -math.inf

    def test_transformed_prior_is_lognormal(self):
        # normal density on theta, adapted to phi = log theta, equals the
        # theta-space density plus the log-Jacobian phi
        base = NormalPrior(2.0, 0.5)
        adapted = TransformedPrior(base, "log")
        phi = 0.7
        assert adapted.log_density(phi) == pytest.approx(
            base.log_density(math.exp(phi)) + phi
        )
        ident = TransformedPrior(base, "identity")
        assert ident.log_density(0.3) == base.log_density(0.3)

    def test_herg_table(self):
        priors = herg_default_priors()
        assert len(priors) == 9
        assert priors[0].mu == 10.5 and priors[0].sd == 1.0
        assert priors[4].mu == 4.0 and priors[4].sd == 0.5
        variance_read = herg_default_priors("variance")
        assert variance_read[0].sd == 1.0
        assert variance_read[1].sd == pytest.approx(math.sqrt(3.0))


class TestLogPosterior:
    def make_problem(self, n=40, sigma=1.5, seed=0):
        rng = np.random.default_rng(seed)
        model = LogisticModel(y0=2.0)
        times = np.linspace(0.0, 80.0, n)
        traj = model.simulate([0.08, 50.0], times)
        data = Dataset(times, traj + sigma * rng.standard_normal(n))
        cov = SparseCovariance(np.full((1, n), sigma**2))
        return model, data, cov

    def test_flat_priors_equal_likelihood(self):
        model, data, cov = self.make_problem()
        lik = MvnLikelihood(data, model, cov)
        phi = model.to_unconstrained([0.08, 50.0])
        flat = (FlatPrior(), FlatPrior())
        assert log_posterior(phi, (), lik, flat) == pytest.approx(
            lik.log_density(phi), abs=1e-12
        )

    def test_out_of_support_prior(self):
        model, data, cov = self.make_problem()
        lik = MvnLikelihood(data, model, cov)
        phi = model.to_unconstrained([0.08, 50.0])
        priors = (UniformPrior(0.0, 1.0), FlatPrior())
        assert log_posterior(phi, (), lik, priors) == -math.inf

    def test_iid_case_equals_univariate_sum(self):
        sigma = 1.5
        model, data, cov = self.make_problem(sigma=sigma)
        lik = MvnLikelihood(data, model, cov)
        phi = model.to_unconstrained([0.08, 50.0])
        total = log_posterior(phi, (), lik)
        traj = model.simulate([0.08, 50.0], data.times)
        oracle = sum(
            -0.5 * (LOG_2PI + 2 * math.log(sigma) + ((y - f) / sigma) ** 2)
            for y, f in zip(data.values, traj)
        )
        assert total == pytest.approx(oracle, rel=1e-10)

    def test_simulation_failure_maps_to_minus_inf(self):
        model, data, cov = self.make_problem()

        class Exploding(LogisticModel):
            def simulate(self, theta, times):
                raise RuntimeError("integration blew up")

        lik = MvnLikelihood(data, Exploding(y0=2.0), cov)
        assert lik.log_density(np.log([0.08, 50.0])) == -math.inf

    def test_covariance_dimension_checked(self):
        model, data, _ = self.make_problem(n=40)
        wrong = SparseCovariance(np.full((1, 39), 1.0))
        with pytest.raises(ValueError, match="dimension"):
            MvnLikelihood(data, model, wrong)

    def test_reparameterization_round_trip(self):
        model, data, cov = self.make_problem()
        lik = MvnLikelihood(data, model, cov)
        theta = np.array([0.08, 50.0])
        phi = model.to_unconstrained(theta)
        back = model.to_constrained(phi)
        assert np.allclose(back, theta, rtol=1e-12)
        assert lik.log_density(model.to_unconstrained(back)) == pytest.approx(
            lik.log_density(phi), abs=1e-12
        )
