"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected and repeated in the pytest terminal summary
under "acceptance criteria".
"""

import time

import numpy as np
import pytest

from test_geometry import fd_log_volume
from test_simulation import r1_equivalent
from test_splines import evidence_constant, quadrature_log_evidence

from ppbr import io
from ppbr.backfitter import adapt_lambda, component_values, mu_conditional, predict, run_chain, update_mu, update_sigma2
from ppbr.cli import main as cli_main
from ppbr.data_model import (
    ComponentState,
    Dataset,
    Direction,
    FitConfig,
    ModelState,
    SSLHyper,
    UniformPrior,
    zero_ridge,
)
from ppbr.evaluation import acs_samples, align, aligned_gammas, mspe
from ppbr.geometry import log_jacobian
from ppbr.simulation import ScenarioSpec, gen_predictor_array, gen_scenario
from ppbr.sim_sampler import mh_sweep
from ppbr.splines import eval_basis, make_knots, marginal_score
from ppbr.ssl_prior import laplace_logpdf
from ppbr.streams import stream

RECOVERY_SEEDS = range(10)
RECOVERY_P = 6


def recovery_chain(seed, prior):
    train, test, truth = gen_scenario(ScenarioSpec(kind="correct", p=RECOVERY_P, K=2, n_train=400, n_test=1000,
                                                   sigma2=1.0, seed=seed))
    cfg = FitConfig(K=2, J=6, rho=0.1, prior=prior, T=4500, T_warmup=3000, seed=seed)
    chain = run_chain(stream(seed, "fit", "gridpoint-0", "rep-0"), train, cfg)
    return train, test, truth, chain


@pytest.fixture(scope="module")
def recovery_runs():
    """Criterion 5's chains under both priors; shared by criteria 5, 6 and 8."""
    out = {}
    for name, prior in (("ss", SSLHyper(0.05, 1.0)), ("u", UniformPrior())):
        start = time.perf_counter()
        runs = []
        for seed in RECOVERY_SEEDS:
            train, test, truth, chain = recovery_chain(seed, prior)
            dirs = truth["directions"]
            amap = align(chain, dirs)
            runs.append({
                "train": train,
                "truth": truth,
                "chain": chain,
                "acs": acs_samples(chain, amap, dirs),
                "gammas": aligned_gammas(chain, amap),
                "mspe": mspe(predict(chain, test)[0], test.responses),
            })
        out[name] = (runs, time.perf_counter() - start)
    return out


def test_criterion_01_conjugacy(acceptance_report):
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    n, alpha, beta, a, b2 = 20, 1.0, 1.0, 0.0, 9.0
    y = 1.0 + rng.standard_normal(n)
    ds = Dataset(gen_predictor_array(rng, 2, n), y, 2)
    state = ModelState(0.3, 1.3, ())
    N = 100_000

    s2 = np.array([update_sigma2(rng, ds, state, alpha, beta) for _ in range(N)])
    a_t, b_t = alpha + n / 2, beta + 0.5 * np.sum((y - 0.3) ** 2)
    mean_ig = b_t / (a_t - 1)
    var_ig = b_t**2 / ((a_t - 1) ** 2 * (a_t - 2))
    m4 = np.mean((s2 - s2.mean()) ** 4)
    z_s2_mean = abs(s2.mean() - mean_ig) / np.sqrt(var_ig / N)
    z_s2_var = abs(s2.var(ddof=1) - var_ig) / np.sqrt((m4 - var_ig**2) / N)

    mu = np.array([update_mu(rng, ds, state, a, b2) for _ in range(N)])
    m_t, v_t = mu_conditional(y, 1.3, a, b2)
    z_mu_mean = abs(mu.mean() - m_t) / np.sqrt(v_t / N)
    z_mu_var = abs(mu.var(ddof=1) - v_t) / (v_t * np.sqrt(2 / (N - 1)))
    elapsed = time.perf_counter() - start

    zs = [z_s2_mean, z_s2_var, z_mu_mean, z_mu_var]
    ok = max(zs) < 3 and elapsed < 10
    acceptance_report(1, ok, f"max |z| = {max(zs):.2f} (< 3) over mean/var of sigma2 and mu; {elapsed:.1f}s (< 10s)")
    assert ok


def test_criterion_02_marginal_score_quadrature(acceptance_report):
    start = time.perf_counter()
    rng = np.random.default_rng(202)
    alpha, beta, n, J = 1.0, 1.0, 6, 2
    worst = 0.0
    for _ in range(20):
        u = rng.standard_normal(n) * rng.uniform(0.5, 5)
        r = rng.standard_normal(n) * rng.uniform(0.2, 3)
        rho = rng.uniform(0, 1)
        B = eval_basis(u, make_knots(u, J)).values
        lhs = quadrature_log_evidence(B, r, rho, alpha, beta)
        rhs = marginal_score(B, r, rho, alpha, beta) + evidence_constant(n, J, alpha, beta)
        worst = max(worst, abs(np.expm1(lhs - rhs)))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-4 and elapsed < 60
    acceptance_report(2, ok, f"worst relative error {worst:.2e} (< 1e-4) on 20 fixtures; {elapsed:.1f}s (< 60s)")
    assert ok


def test_criterion_03_jacobian(acceptance_report):
    start = time.perf_counter()
    rng = np.random.default_rng(303)
    worst = 0.0
    for p in (3, 5, 8):
        for _ in range(100):
            theta = rng.uniform(-1.4, 1.4, p - 1)
            worst = max(worst, abs(log_jacobian(theta) - fd_log_volume(theta)))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-5 and elapsed < 10
    acceptance_report(3, ok, f"worst |log-volume error| {worst:.2e} (< 1e-5), p in {{3,5,8}}; {elapsed:.2f}s (< 10s)")
    assert ok


def test_criterion_04_stationarity(acceptance_report):
    start = time.perf_counter()
    rng = np.random.default_rng(404)
    n = 12
    packed = gen_predictor_array(rng, 2, n)
    u = Dataset(packed, np.zeros(n), 2).indices(np.array([0.6, 0.8]))
    y = 0.3 * u + rng.standard_normal(n)
    ds = Dataset(packed, y, 2)
    alpha, beta, h1 = 1.0, 1.0, 1.0

    # at rho = 0 and J = 2 the target only involves the affine least-squares RSS
    def log_target(t):
        idx = ds.indices(np.array([np.sin(t), np.cos(t)]))
        X = np.column_stack([np.ones(n), idx])
        rss = np.sum((y - X @ np.linalg.lstsq(X, y, rcond=None)[0]) ** 2)
        return laplace_logpdf(t, h1) - (alpha + n / 2) * np.log(rss + 2 * beta)

    grid = np.linspace(-np.pi / 2, np.pi / 2, 8001)
    lt = np.array([log_target(t) for t in grid])
    dens = np.exp(lt - lt.max())
    cdf = np.r_[0.0, np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))]
    cdf /= cdf[-1]
    edges = np.linspace(-np.pi / 2, np.pi / 2, 41)
    exact = np.diff(np.interp(edges, grid, cdf))

    cfg = FitConfig(K=1, J=2, rho=0.0, prior=SSLHyper(0.05, h1), sigma2_prior=(alpha, beta))
    comp = ComponentState(Direction.from_theta([0.3]), zero_ridge(), np.zeros(1, dtype=np.int8), 0.5, 5.0)
    sweeps = 200_000
    theta = np.empty(sweeps)
    mh_rng = np.random.default_rng(1)
    for i in range(sweeps):
        comp = mh_sweep(mh_rng, comp, y, ds, cfg, update_allocations=False).component
        theta[i] = comp.direction.theta[0]
    emp = np.histogram(theta, edges)[0] / sweeps
    tv = 0.5 * np.abs(emp - exact).sum()
    elapsed = time.perf_counter() - start
    ok = tv < 0.05 and elapsed < 120
    acceptance_report(4, ok, f"TV distance {tv:.4f} (< 0.05) over {sweeps} sweeps; {elapsed:.1f}s (< 120s)")
    assert ok


def test_criterion_05_recovery(recovery_runs, acceptance_report):
    runs, elapsed = recovery_runs["ss"]
    pooled = np.vstack([r["acs"] for r in runs])
    med = np.median(pooled, axis=0)
    per_seed = [np.round(np.median(r["acs"], axis=0), 3).tolist() for r in runs]
    mean_mspe = float(np.mean([r["mspe"] for r in runs]))
    ok = bool(np.all(med >= 0.90)) and mean_mspe <= 1.6 and elapsed < 1200
    acceptance_report(5, ok, f"median ACS {np.round(med, 4).tolist()} (>= 0.90), mean MSPE {mean_mspe:.3f} (<= 1.6), "
                             f"{elapsed:.0f}s (< 1200s); per-seed median ACS {per_seed}")
    assert ok


def test_criterion_06_sparsity(recovery_runs, acceptance_report):
    medians = {}
    for name in ("ss", "u"):
        runs, _ = recovery_runs[name]
        vals = []
        for r in runs:
            truth = np.asarray(r["truth"]["directions"])
            zero = truth == 0
            for k in range(truth.shape[0]):
                vals.append(np.abs(r["gammas"][:, k, zero[k]]).ravel())
        medians[name] = float(np.median(np.concatenate(vals)))
    elapsed = recovery_runs["u"][1]
    ok = medians["ss"] < medians["u"] and elapsed < 1200
    acceptance_report(6, ok, f"median |gamma| at true zeros: SS {medians['ss']:.4g} < U {medians['u']:.4g}; "
                             f"uniform chains {elapsed:.0f}s (< 1200s)")
    assert ok


def test_criterion_07_lambda_rule(acceptance_report):
    start = time.perf_counter()
    rng = np.random.default_rng(707)
    direction = Direction.from_gamma([0.0, 1.0])
    mismatches = 0
    for _ in range(10_000):
        accepts = int(rng.integers(0, 101))
        flags = np.zeros(100, dtype=bool)
        flags[rng.choice(100, accepts, replace=False)] = True
        lam = float(rng.uniform(0.1, 1e5))
        comp = ComponentState(direction, zero_ridge(), np.zeros(1, dtype=np.int8), 0.5, lam, tuple(flags.tolist()))
        rate = accepts / 100
        expected = lam * 1.1 if rate < 0.2 else lam / 1.1 if rate > 0.4 else lam
        out = adapt_lambda(comp)
        mismatches += (out.lam != expected) or out.accept_history != ()
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 1
    acceptance_report(7, ok, f"{mismatches} mismatches over 10^4 windows; {elapsed:.2f}s (< 1s)")
    assert ok


def test_criterion_08_centering(recovery_runs, acceptance_report):
    runs, _ = recovery_runs["ss"]
    worst = 0.0
    for r in runs:
        for draw in r["chain"].draws:
            for comp in draw.components:
                g = component_values(r["train"], comp)
                worst = max(worst, abs(g.mean()) / g.std())
    ok = worst < 1e-8
    acceptance_report(8, ok, f"max |mean g| / sd(g) = {worst:.2e} (< 1e-8) over every stored draw")
    assert ok


def test_criterion_09_misspecified_r1(acceptance_report):
    worst = 0.0
    for seed in range(10):
        y_m, y_c = r1_equivalent(seed, p=10, n_train=400, n_test=1000)
        worst = max(worst, float(np.max(np.abs(y_m - y_c))))
    ok = worst < 1e-10
    acceptance_report(9, ok, f"max |Y_misspec - Y_additive| = {worst:.2e} (< 1e-10) over 10 seeds")
    assert ok


def test_criterion_10_determinism(tmp_path, acceptance_report):
    data = tmp_path / "data"
    assert cli_main(["simulate", "--p", "6", "--n-train", "150", "--n-test", "10", "--seed", "10",
                     "--out", str(data)]) == 0
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli_main(["fit", "--train", str(data / "train.csv"), "--out", str(out), "--T", "300",
                         "--warmup", "150", "--J", "4", "--rho", "0.1", "0.2", "--chains", "2", "--seed", "10"]) == 0
        outs.append(out)
    differing = []
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    for rel in files:
        a, b = outs[0] / rel, outs[1] / rel
        if rel.name == "meta.json":
            # wall-clock timings are the only non-reproducible field
            ma, mb = io.read_json(a), io.read_json(b)
            ma.pop("timings"), mb.pop("timings")
            same = ma == mb
        else:
            same = a.read_bytes() == b.read_bytes()
        if not same:
            differing.append(str(rel))
    ok = not differing and len(files) == 13
    acceptance_report(10, ok, f"{len(files)} files compared across two runs, differing: {differing or 'none'}")
    assert ok
