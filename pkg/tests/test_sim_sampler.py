from dataclasses import replace

import numpy as np
import pytest

from conftest import make_dataset
from ppbr import sim_sampler
from ppbr.data_model import ComponentState, Direction, FitConfig, SSLHyper, UniformPrior, zero_ridge
from ppbr.sim_sampler import log_posterior_gamma, mh_sweep
from ppbr.splines import eval_basis, make_knots, posterior_coeffs
from ppbr.ssl_prior import laplace_logpdf


def affine_log_target(theta, dataset, r, alpha, beta, h):
    """Independent p=2 target: slab Laplace prior times the RSS of an affine fit."""
    gamma = np.array([np.sin(theta), np.cos(theta)])
    u = dataset.indices(gamma)
    X = np.column_stack([np.ones_like(u), u])
    coef, *_ = np.linalg.lstsq(X, r, rcond=None)
    rss = np.sum((r - X @ coef) ** 2)
    return laplace_logpdf(theta, h) - (alpha + r.size / 2) * np.log(rss + 2 * beta)


def component(gamma, lam=1e4, p=None):
    d = Direction.from_gamma(gamma)
    return ComponentState(d, zero_ridge(), np.zeros(d.p - 1, dtype=np.int8), 0.5, lam)


class TestLogPosterior:
    def test_deterministic(self, rng):
        ds, g = make_dataset(rng, p=4, n=40, noise=0.2)
        args = (np.zeros(3), ds.responses, ds, 4, 0.1, 1.0, 1.0, SSLHyper())
        assert log_posterior_gamma(g, *args) == log_posterior_gamma(g, *args)

    def test_grid_oracle_p2(self, rng):
        ds, _ = make_dataset(rng, p=2, n=8, noise=0.5, gamma=[0.6, 0.8], link=lambda u: u)
        spec = SSLHyper(0.05, 1.0)
        grid = np.linspace(-1.5, 1.5, 61)
        ours = np.array([log_posterior_gamma(Direction.from_theta([t]), np.zeros(1), ds.responses, ds, 2, 0.0,
                                             1.0, 1.0, spec) for t in grid])
        oracle = np.array([affine_log_target(t, ds, ds.responses, 1.0, 1.0, 1.0) for t in grid])
        diff = ours - oracle
        np.testing.assert_allclose(diff, diff[0], atol=1e-8)

    def test_zero_residuals_leave_prior(self, rng):
        ds, _ = make_dataset(rng, p=4, n=30)
        spec = SSLHyper(0.1, 1.0)
        m = np.array([1, 0, 1], dtype=np.int8)
        g1, g2 = Direction.from_gamma([0.1, 0.2, 0.3, 0.9]), Direction.from_gamma([0.5, -0.5, 0.1, 0.7])
        lp = [log_posterior_gamma(g, m, np.zeros(30), ds, 4, 0.1, 1.0, 1.0, spec) for g in (g1, g2)]
        from ppbr.ssl_prior import log_prior_gamma
        pr = [log_prior_gamma(g.theta, m, spec) for g in (g1, g2)]
        assert lp[0] - lp[1] == pytest.approx(pr[0] - pr[1], abs=1e-12)

    def test_degenerate_indices_score_minus_inf(self):
        from ppbr.data_model import Dataset, pack_upper
        packed = pack_upper(np.stack([np.eye(3) * 2.0] * 10))
        ds = Dataset(packed, np.arange(10.0), 3)
        lp = log_posterior_gamma(np.array([0.0, 0.6, 0.8]), np.zeros(2), ds.responses, ds, 3, 0.1, 1.0, 1.0,
                                 SSLHyper())
        assert lp == -np.inf


class TestSweep:
    def test_identical_proposal_always_accepted(self, rng, monkeypatch):
        ds, g = make_dataset(rng, p=4, n=40, noise=0.3)
        monkeypatch.setattr(sim_sampler, "sample_vmf", lambda rng, lam, mu: np.array(mu))
        comp = component(g)
        cfg = FitConfig(K=1, J=4)
        for _ in range(200):
            res = mh_sweep(rng, comp, ds.responses, ds, cfg)
            assert res.accepted
            comp = res.component

    def test_huge_concentration_accepts(self, rng):
        ds, g = make_dataset(rng, p=4, n=60, noise=0.3)
        comp = component(g + 0.1, lam=1e9)
        cfg = FitConfig(K=1, J=4)
        accepted = 0
        for _ in range(1000):
            res = mh_sweep(rng, comp, ds.responses, ds, cfg)
            accepted += res.accepted
            comp = res.component
        assert accepted / 1000 > 0.95

    def test_coefficients_refit_current_direction(self, rng):
        ds, g = make_dataset(rng, p=5, n=80, noise=0.3)
        comp = component(g, lam=200.0)
        cfg = FitConfig(K=1, J=5, rho=0.2)
        for _ in range(50):
            comp = mh_sweep(rng, comp, ds.responses, ds, cfg).component
            u = ds.indices(comp.direction.gamma)
            c0 = posterior_coeffs(eval_basis(u, make_knots(u, 5)), ds.responses, 0.2)[0]
            np.testing.assert_allclose(comp.ridge.coeffs, c0, atol=1e-10)

    def test_log_posterior_never_nan(self, rng):
        ds, g = make_dataset(rng, p=4, n=50, noise=1.0)
        comp = component(rng.standard_normal(4), lam=5.0)
        cfg = FitConfig(K=1, J=6, prior=SSLHyper(0.025, 1.0))
        for _ in range(300):
            res = mh_sweep(rng, comp, ds.responses, ds, cfg)
            assert np.isfinite(res.log_post_current)
            comp = res.component

    def test_history_ring_buffer(self, rng):
        ds, g = make_dataset(rng, p=3, n=30)
        comp = component(g, lam=50.0)
        cfg = FitConfig(K=1, J=3, adapt_window=7)
        flags = []
        for _ in range(12):
            res = mh_sweep(rng, comp, ds.responses, ds, cfg)
            flags.append(res.accepted)
            comp = res.component
        assert comp.accept_history == tuple(flags[-7:])

    def test_uniform_ignores_allocation_switch(self):
        seeds = np.random.default_rng(4)
        ds, g = make_dataset(seeds, p=4, n=50, noise=0.5)
        cfg = FitConfig(K=1, J=4, prior=UniformPrior())
        runs = []
        for flag in (True, False):
            rng = np.random.default_rng(99)
            comp = component(g + 0.2, lam=30.0)
            decisions = []
            for _ in range(100):
                res = mh_sweep(rng, comp, ds.responses, ds, cfg, update_allocations=flag)
                decisions.append(res.accepted)
                comp = res.component
            runs.append((decisions, comp.direction.gamma.copy()))
        assert runs[0][0] == runs[1][0]
        np.testing.assert_array_equal(runs[0][1], runs[1][1])

    def test_frozen_allocations_kept(self, rng):
        ds, g = make_dataset(rng, p=4, n=40)
        comp = replace(component(g, lam=100.0), m=np.array([1, 0, 1], dtype=np.int8), w=0.3)
        res = mh_sweep(rng, comp, ds.responses, ds, FitConfig(K=1, J=3), update_allocations=False)
        np.testing.assert_array_equal(res.component.m, [1, 0, 1])
        assert res.component.w == 0.3

    def test_allocations_updated_under_ssl(self, rng):
        ds, g = make_dataset(rng, p=6, n=40)
        comp = component(g, lam=100.0)
        ws = {mh_sweep(rng, comp, ds.responses, ds, FitConfig(K=1, J=3)).component.w for _ in range(5)}
        assert len(ws) == 5
