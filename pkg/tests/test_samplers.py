import math

import numpy as np
import pytest
from scipy import stats

from conftest import bridge_marginal_cdf

from bessel_lab.samplers import (MAX_MESH, RngStream, bessel_bridge_general,
                                 bessel_bridge_integer, bessel_process,
                                 bessel_rv, besq_bridge_general,
                                 besq_transition_sample, gaussian_bridge,
                                 mc_estimate)

TIMES_17 = np.linspace(0.0, 1.0, 17)


class TestRngStream:
    def test_reproducible(self):
        a = RngStream(42, 1).generator.standard_normal(5)
        b = RngStream(42, 1).generator.standard_normal(5)
        assert np.array_equal(a, b)

    def test_streams_differ(self):
        a = RngStream(42, 1).generator.standard_normal(5)
        b = RngStream(42, 2).generator.standard_normal(5)
        assert not np.array_equal(a, b)

    def test_substream(self):
        s = RngStream(7, 3)
        assert s.substream(0).stream != s.stream


class TestGaussianBridge:
    def test_endpoints_zero(self):
        paths = gaussian_bridge(2, TIMES_17, RngStream(1), size=50)
        assert np.all(paths[:, :, 0] == 0.0)
        assert np.all(paths[:, :, -1] == 0.0)

    def test_variance_and_covariance(self):
        times = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
        paths = gaussian_bridge(1, times, RngStream(2), size=100000)
        x = paths[:, 0, :]
        v = np.var(x[:, 2])
        assert abs(v - 0.25) < 4 * 0.25 * math.sqrt(2.0 / 100000)
        cov = np.mean(x[:, 1] * x[:, 3])
        assert abs(cov - 1.0 / 16.0) < 4 * 0.3 / math.sqrt(100000)


class TestTransition:
    def test_moments(self):
        delta, t, x = 2.5, 0.4, 1.0
        draws = besq_transition_sample(delta, t, x, RngStream(3), size=100000)
        mean, var = draws.mean(), draws.var()
        want_mean = x + delta * t
        want_var = 4 * t * x + 2 * delta * t * t
        assert abs(mean - want_mean) < 4 * math.sqrt(want_var / 100000)
        assert abs(var - want_var) < 4 * want_var * math.sqrt(8.0 / 100000)

    def test_zero_start_is_gamma(self):
        delta, t = 3.0, 0.5
        draws = besq_transition_sample(delta, t, 0.0, RngStream(4),
                                       size=50000)
        ks = stats.kstest(draws, stats.gamma(a=delta / 2, scale=2 * t).cdf)
        assert ks.pvalue > 0.01

    def test_domain(self):
        with pytest.raises(ValueError):
            besq_transition_sample(0.0, 0.5, 1.0, RngStream(0))


class TestBesselRv:
    @pytest.mark.parametrize("nu,z", [(-0.5, 0.8), (0.25, 5.0), (0.75, 40.0)])
    def test_matches_pmf(self, nu, z):
        from scipy.special import gammaln, ive
        g = RngStream(11, 1).generator
        draws = bessel_rv(nu, np.full(200000, z), g)
        kmax = int(draws.max()) + 1
        ls = np.arange(kmax + 1)
        logp = ((2 * ls + nu) * np.log(z / 2) - gammaln(ls + 1.0)
                - gammaln(ls + nu + 1.0) - (np.log(ive(nu, z)) + z))
        p = np.exp(logp)
        counts = np.bincount(draws, minlength=kmax + 1)
        # merge tail bins with tiny expectation
        exp = p * len(draws)
        keep = exp > 10
        obs = np.append(counts[keep], counts[~keep].sum())
        expv = np.append(exp[keep], exp[~keep].sum())
        chi2 = float(np.sum((obs - expv) ** 2 / np.maximum(expv, 1e-12)))
        pval = 1.0 - stats.chi2.cdf(chi2, df=len(obs) - 1)
        assert pval > 0.001

    def test_zero_argument(self):
        g = RngStream(12).generator
        assert np.all(bessel_rv(0.25, np.zeros(10), g) == 0)


class TestBridgeGeneral:
    def test_endpoints_exact(self):
        paths = bessel_bridge_general(1.5, 1.0, 2.0, TIMES_17, RngStream(6),
                                      size=20)
        assert np.all(paths[:, 0] == 1.0)
        assert np.all(paths[:, -1] == 2.0)

    def test_marginal_ks(self):
        delta, a, ap = 1.5, 1.0, 2.0
        paths = bessel_bridge_general(delta, a, ap, TIMES_17, RngStream(8, 2),
                                      size=20000)
        r_idx = 8  # r = 0.5
        cdf = bridge_marginal_cdf(delta, TIMES_17[r_idx], a, ap)
        ks = stats.kstest(paths[:, r_idx], cdf)
        assert ks.pvalue > 0.01

    def test_deterministic(self):
        p1 = bessel_bridge_general(2.2, 0.5, 1.0, TIMES_17, RngStream(9, 1),
                                   size=5)
        p2 = bessel_bridge_general(2.2, 0.5, 1.0, TIMES_17, RngStream(9, 1),
                                   size=5)
        assert np.array_equal(p1, p2)

    def test_mesh_validation(self):
        with pytest.raises(ValueError):
            besq_bridge_general(2.0, 0.0, 0.0, np.linspace(0, 1, MAX_MESH + 2),
                                RngStream(0))
        with pytest.raises(ValueError):
            besq_bridge_general(2.0, 0.0, 0.0, np.array([0.0, 0.5, 0.9]),
                                RngStream(0))
        with pytest.raises(ValueError):
            besq_bridge_general(-1.0, 0.0, 0.0, TIMES_17, RngStream(0))


class TestBesselProcess:
    def test_mean_matches_zeta(self):
        from bessel_lab.laplace_sigma import zeta
        delta, a = 2.5, 1.0
        times = np.array([0.0, 0.5, 1.0])
        paths = bessel_process(delta, a, times, RngStream(10), size=100000)
        want = zeta(delta, a, 0.5)
        got = paths[:, 1].mean()
        se = paths[:, 1].std() / math.sqrt(100000)
        assert abs(got - want) <= 4 * se


class TestMcEstimate:
    def test_constant(self):
        mean, se = mc_estimate(lambda n, rng: np.full(n, 3.0), 1000,
                               RngStream(0))
        assert mean == pytest.approx(3.0)
        assert se == pytest.approx(0.0, abs=1e-12)

    def test_brownian_bridge_energy(self):
        # E[<Leb, X^2>] for the delta = 1 bridge = int r(1-r) dr = 1/6
        times = np.linspace(0.0, 1.0, 101)
        w = np.zeros(len(times))
        dt = np.diff(times)
        w[:-1] += 0.5 * dt
        w[1:] += 0.5 * dt

        def sample(n, rng):
            paths = bessel_bridge_general(1.0, 0.0, 0.0, times, rng, size=n)
            return (paths**2) @ w

        mean, se = mc_estimate(sample, 50000, RngStream(13, 1))
        assert abs(mean - 1.0 / 6.0) <= 3 * se

    def test_seed_determinism(self):
        def sample(n, rng):
            return rng.generator.standard_normal(n)

        r1 = mc_estimate(sample, 12345, RngStream(21, 2))
        r2 = mc_estimate(sample, 12345, RngStream(21, 2))
        assert r1 == r2

    def test_min_samples(self):
        with pytest.raises(ValueError):
            mc_estimate(lambda n, rng: np.zeros(n), 10, RngStream(0))


class TestIntegerAgreement:
    @pytest.mark.parametrize("delta", [1, 2, 3])
    def test_two_sampler_two_sample_ks(self, delta):
        n = 10000
        pg = bessel_bridge_integer(delta, TIMES_17, RngStream(30, delta),
                                   size=n)
        pq = bessel_bridge_general(float(delta), 0.0, 0.0, TIMES_17,
                                   RngStream(31, delta), size=n)
        idxs = [2, 5, 8, 11, 14]
        for i in idxs:
            ks = stats.ks_2samp(pg[:, i], pq[:, i])
            assert ks.pvalue > 0.01 / len(idxs)
