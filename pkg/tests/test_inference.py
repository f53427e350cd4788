import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from hivdyn import inference as inf
from hivdyn import ode
from hivdyn.efficacy import EfficacyInputs
from hivdyn.errors import ChainAbortError, DomainError, LinAlgError
from hivdyn.records import SubjectRecord

DAYS = (0, 7, 14, 28, 56, 84, 112, 140, 168)
ETA = np.array(inf.PAPER_ETA)


def synthetic_subjects(n, seed=0, noise=0.25, spread=0.2, gamma0=0.7):
    rng = np.random.default_rng(seed)
    out, truth = [], []
    for i in range(n):
        th = ETA + spread * rng.standard_normal(6)
        e = EfficacyInputs.constant(gamma0, float(np.exp(th[0])))
        f = ode.predict_log10_viral_load(th, e, 10**4.8, np.array(DAYS, float))
        y = f + noise * rng.standard_normal(f.size)
        y[0] = f[0]
        out.append(SubjectRecord(f"s{i:02d}", DAYS, tuple(y), e))
        truth.append(th)
    return out, np.array(truth)


def linear_subjects(n, p=1, m=4, seed=0):
    rng = np.random.default_rng(seed)
    subs = []
    for i in range(n):
        x = rng.standard_normal((m, p)) if p > 1 else np.ones((m, 1))
        y = x @ rng.standard_normal(p) + 0.5 * rng.standard_normal(m)
        subs.append(inf.LinearSubject(f"L{i}", y, x))
    return subs


def scalar_priors(**kw):
    args = dict(a=2.0, b=1.0, eta=[0.0], lam=[[4.0]], omega=[[1.0]], nu=3.0)
    args.update(kw)
    return inf.Hyperpriors(**args)


def pop(p=6, mu=None, sigma_inv=None, error_prec=1.0):
    return inf.PopulationState(
        np.zeros(p) if mu is None else np.asarray(mu, float),
        np.eye(p) if sigma_inv is None else np.asarray(sigma_inv, float),
        error_prec,
    )


class TestHyperpriors:
    def test_defaults(self):
        h = inf.Hyperpriors()
        assert (h.a, h.b, h.nu) == (4.5, 9.0, 8.0)
        np.testing.assert_array_equal(h.eta, ETA)
        np.testing.assert_array_equal(np.diag(h.lam), 1000.0)
        np.testing.assert_array_equal(np.diag(h.omega), 2.0)
        assert h.a * h.b == 40.5

    @pytest.mark.parametrize(
        "kw",
        [
            {"a": 0.0},
            {"b": -1.0},
            {"omega": -np.eye(6)},
            {"lam": np.ones((6, 6))},
            {"nu": 4.0},
            {"eta": np.zeros(5)},
        ],
    )
    def test_validation(self, kw):
        with pytest.raises(DomainError):
            inf.Hyperpriors(**kw)


class TestLogLikelihood:
    def test_zero_residual(self):
        s = inf.LinearSubject("a", np.array([1.0, 2.0, 3.0]), np.array([[1.0], [2.0], [3.0]]))
        ll = inf.log_likelihood_subject([1.0], s, 2.5, inf.LinearModel())
        assert ll == pytest.approx(3 * 0.5 * math.log(2.5 / (2 * math.pi)))

    def test_single_residual(self):
        s = inf.LinearSubject("a", np.array([2.0]), np.array([[0.0]]))
        ll = inf.log_likelihood_subject([0.0], s, 1.0, inf.LinearModel())
        assert ll == pytest.approx(-0.5 * math.log(2 * math.pi) - 2.0)

    def test_density_oracle(self):
        subs, truth = synthetic_subjects(5, seed=4)
        rng = np.random.default_rng(9)
        for s, th in zip(subs, truth):
            theta = th + 0.1 * rng.standard_normal(6)
            prec = float(rng.uniform(1, 20))
            f = ode.predict_log10_viral_load(theta, s.efficacy_inputs, 10 ** s.log10_vl[0], s.days)
            oracle = stats.norm.logpdf(s.log10_vl, f, 1 / math.sqrt(prec)).sum()
            got = inf.log_likelihood_subject(ode.DynamicParams.from_array(theta), s, prec)
            assert got == pytest.approx(oracle, abs=1e-10)

    def test_solver_failure_is_minus_inf(self):
        subs, _ = synthetic_subjects(1)
        model = inf.ViralLoadModel(ode.IntegratorConfig(max_steps=3))
        assert inf.log_likelihood_subject(ETA, subs[0], 1.0, model) == -math.inf

    def test_subject_state_uses_current_precision(self):
        st = inf.SubjectState(np.zeros(1), 3.0, 4, np.ones(1))
        assert st.log_likelihood(2.0) == pytest.approx(2 * math.log(2 / (2 * math.pi)) - 3.0)


class TestLogTarget:
    def test_vanishes_at_mean(self):
        s = inf.LinearSubject("a", np.zeros(2), np.zeros((2, 6)))
        assert inf.log_target_theta(np.zeros(6), s, pop(), inf.LinearModel()) == 0.0

    def test_unit_offset(self):
        s = inf.LinearSubject("a", np.zeros(2), np.zeros((2, 6)))
        th = np.array([1.0, 0, 0, 0, 0, 0])
        assert inf.log_target_theta(th, s, pop(), inf.LinearModel()) == pytest.approx(-0.5)

    def test_term_by_term(self):
        subs, truth = synthetic_subjects(3, seed=2)
        rng = np.random.default_rng(3)
        for s, th in zip(subs, truth):
            a = rng.standard_normal((6, 6))
            p = pop(mu=ETA, sigma_inv=a @ a.T + np.eye(6), error_prec=7.0)
            d = th - ETA
            expected = (
                inf.log_likelihood_subject(th, s, 7.0)
                - s.n_obs * 0.5 * math.log(7.0 / (2 * math.pi))
                - 0.5 * d @ p.sigma_inv @ d
            )
            assert inf.log_target_theta(th, s, p) == pytest.approx(expected, rel=1e-12)


def mc_close(samples, expected, k=4.0):
    """Assert sample means are within k Monte Carlo standard errors."""
    samples = np.asarray(samples)
    se = samples.std(axis=0, ddof=1) / math.sqrt(samples.shape[0])
    assert np.all(np.abs(samples.mean(axis=0) - expected) <= k * se + 1e-12)


class TestErrorPrecision:
    def test_prior_recovery(self):
        rng = np.random.default_rng(0)
        h = inf.Hyperpriors()
        x = np.array([inf.sample_error_precision(0.0, 0, h, rng) for _ in range(100_000)])
        mc_close(x, 4.5 * 9.0)
        mc_close((x - x.mean()) ** 2, 4.5 * 81.0)

    def test_posterior_mean(self):
        rng = np.random.default_rng(1)
        h = inf.Hyperpriors()
        x = np.array([inf.sample_error_precision(50.0, 378, h, rng) for _ in range(200_000)])
        mc_close(x, (4.5 + 189) / (1 / 9 + 25))
        assert np.all(x > 0)


class TestPopulationMean:
    def test_single_subject_formula(self):
        rng = np.random.default_rng(2)
        h = inf.Hyperpriors(eta=np.zeros(6), lam=np.eye(6))
        th = np.array([[1.0, -2.0, 0.5, 3.0, 0.0, 4.0]])
        x = np.array([inf.sample_population_mean(th, np.eye(6), h, rng) for _ in range(100_000)])
        mc_close(x, th[0] / 2)
        cov = np.cov(x.T)
        # each covariance entry has MC variance (s_ii s_jj + s_ij^2) / N
        se = np.sqrt((0.25 + np.diag(np.full(6, 0.25))) / x.shape[0])
        assert np.all(np.abs(cov - np.eye(6) / 2) <= 4 * se)

    def test_flat_prior_tracks_sample_mean(self):
        rng = np.random.default_rng(3)
        th = ETA + rng.standard_normal((500, 6))
        x = np.array([inf.sample_population_mean(th, np.eye(6), inf.Hyperpriors(), rng) for _ in range(20_000)])
        prec = 500 * np.eye(6) + np.eye(6) / 1000
        mean = np.linalg.solve(prec, th.sum(0) + ETA / 1000)
        mc_close(x, mean)
        np.testing.assert_allclose(x.mean(0), th.mean(0), atol=5e-3)

    def test_not_positive_definite(self):
        with pytest.raises(LinAlgError):
            inf.sample_population_mean(np.zeros((1, 6)), -10 * np.eye(6), inf.Hyperpriors(), np.random.default_rng())


class TestPopulationPrecision:
    def test_zero_scatter(self):
        rng = np.random.default_rng(4)
        h = inf.Hyperpriors()
        th = np.tile(ETA, (3, 1))
        x = np.array([inf.sample_population_precision(th, ETA, h, rng) for _ in range(100_000)])
        s = h.omega
        df = 3 + h.nu
        mc_close(x.reshape(len(x), -1), (df * s).ravel())
        var = df * (s**2 + np.outer(np.diag(s), np.diag(s)))
        emp = x.var(axis=0, ddof=1)
        # loose check on second moments: within 5%
        np.testing.assert_allclose(emp, var, rtol=0.05)

    def test_general_scale_mean(self):
        rng = np.random.default_rng(5)
        th = ETA + 0.3 * rng.standard_normal((10, 6))
        mu = th.mean(0)
        h = inf.Hyperpriors()
        scale = np.linalg.inv(np.linalg.inv(h.omega) + (th - mu).T @ (th - mu))
        x = np.array([inf.sample_population_precision(th, mu, h, rng) for _ in range(100_000)])
        mc_close(x.reshape(len(x), -1), ((10 + h.nu) * scale).ravel())

    def test_draws_symmetric_positive_definite(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            w = inf.sample_population_precision(ETA + rng.standard_normal((4, 6)), ETA, inf.Hyperpriors(), rng)
            np.testing.assert_array_equal(w, w.T)
            np.linalg.cholesky(w)

    def test_matches_scipy_wishart(self):
        rng = np.random.default_rng(7)
        s = np.array([[2.0, 0.5], [0.5, 1.0]])
        x = np.array([inf.wishart_draw(s, 5.0, rng)[0, 1] for _ in range(20_000)])
        ref = stats.wishart(df=5.0, scale=s).rvs(20_000, random_state=1)[:, 0, 1]
        assert stats.ks_2samp(x, ref).statistic < 0.03

    def test_singular_scale(self):
        with pytest.raises(LinAlgError):
            inf.wishart_draw(np.zeros((2, 2)), 5.0, np.random.default_rng())


class _Blowup(inf.LinearModel):
    def residual_ss(self, theta, subject):
        return math.inf


class TestMetropolis:
    def test_infinite_target_rejected(self):
        s = inf.LinearSubject("a", np.zeros(2), np.zeros((2, 1)))
        st = inf.SubjectState(np.zeros(1), 0.0, 2, np.ones(1))
        rng = np.random.default_rng(0)
        for _ in range(50):
            new, acc = inf.mh_step_theta(st, s, pop(1), rng, _Blowup())
            assert not acc and new is st

    def test_zero_width_accepted(self):
        s = inf.LinearSubject("a", np.array([3.0]), np.ones((1, 1)))
        st = inf.SubjectState(np.array([0.4]), 6.76, 1, np.zeros(1))
        new, acc = inf.mh_step_theta(st, s, pop(1), np.random.default_rng(0), inf.LinearModel())
        assert acc
        np.testing.assert_array_equal(new.theta, st.theta)

    def test_conjugate_surrogate(self):
        # y_j ~ N(theta, 1/tau), theta ~ N(mu, 1/s): posterior is Gaussian
        y = np.array([1.3, 0.4, 2.2, 1.1])
        tau, s_prec, mu = 2.0, 0.5, -1.0
        post_prec = tau * y.size + s_prec
        post_mean = (tau * y.sum() + s_prec * mu) / post_prec
        subject = inf.LinearSubject("a", y, np.ones((4, 1)))
        model = inf.LinearModel()
        p = pop(1, mu=[mu], sigma_inv=[[s_prec]], error_prec=tau)
        rng = np.random.default_rng(11)
        st = inf.SubjectState(np.array([post_mean]), model.residual_ss(np.array([post_mean]), subject), 4, np.array([1.2]))
        draws = np.empty(100_000)
        for k in range(draws.size * 3):
            st, _ = inf.mh_step_theta(st, subject, p, rng, model)
            if k % 3 == 2:
                draws[k // 3] = st.theta[0]
        d = stats.kstest(draws, stats.norm(post_mean, 1 / math.sqrt(post_prec)).cdf).statistic
        assert d < 0.02


class TestPopulationShift:
    def _setup(self):
        subs = linear_subjects(3, p=2, seed=1)
        model = inf.LinearModel()
        th = np.array([[0.1, -0.2], [0.3, 0.0], [-0.1, 0.4]])
        states = [inf.SubjectState(t, model.residual_ss(t, s), 4, np.ones(2)) for t, s in zip(th, subs)]
        fn = lambda ths: [model.residual_ss(t, s) for t, s in zip(ths, subs)]  # noqa: E731
        h = inf.Hyperpriors(eta=[0.0, 0.0], lam=np.eye(2), omega=np.eye(2), nu=3.0)
        return states, fn, h

    def test_zero_step_accepted_unchanged(self):
        states, fn, h = self._setup()
        p = pop(2, mu=[0.2, 0.1])
        new, mu, acc = inf.population_shift_step(states, p, h, np.zeros(2), np.random.default_rng(0), fn)
        assert acc
        np.testing.assert_array_equal(mu, p.mu)
        assert all(np.array_equal(a.theta, b.theta) for a, b in zip(new, states))

    def test_deviations_preserved(self):
        states, fn, h = self._setup()
        p = pop(2, mu=[0.2, 0.1])
        rng = np.random.default_rng(3)
        for _ in range(50):
            new, mu, acc = inf.population_shift_step(states, p, h, np.full(2, 0.3), rng, fn)
            if acc:
                break
        assert acc
        for a, b in zip(new, states):
            np.testing.assert_allclose(a.theta - mu, b.theta - p.mu, atol=1e-15)
        assert [a.residual_ss for a in new] == fn([a.theta for a in new])

    def test_non_finite_rejected(self):
        states, _, h = self._setup()
        fn = lambda ths: [1.0, math.inf, 1.0]  # noqa: E731
        new, mu, acc = inf.population_shift_step(states, pop(2), h, np.full(2, 0.1), np.random.default_rng(0), fn)
        assert not acc and new == states


def test_matrix_step_matches_vector_step():
    s = inf.LinearSubject("a", np.array([0.3, 1.0]), np.eye(2))
    scales = np.array([0.4, 0.9])
    model = inf.LinearModel()
    st = inf.SubjectState(np.zeros(2), model.residual_ss(np.zeros(2), s), 2, scales)
    a, _ = inf.mh_step_theta(st, s, pop(2), np.random.default_rng(4), model)
    b, _ = inf.mh_step_theta(replace(st, step_scales=np.diag(scales)), s, pop(2), np.random.default_rng(4), model)
    np.testing.assert_array_equal(a.theta, b.theta)


def test_full_proposal_chain():
    subs = linear_subjects(3, p=2, seed=2)
    h = inf.Hyperpriors(eta=[0.0, 0.0], lam=np.eye(2) * 10, omega=np.eye(2), nu=3.0)
    cfg = inf.MCMCConfig(burn_in=1500, post_iterations=600, thin=2, seed=1, proposal="full")
    chain = inf.run_chain(subs, h, cfg, model=inf.LinearModel())
    assert chain.step_scales.shape == (3, 2, 2)
    np.testing.assert_array_equal(np.triu(chain.step_scales, 1), 0.0)
    assert np.all(np.isfinite(chain.theta))


def test_shift_acceptance_reported():
    subs = linear_subjects(3, seed=2)
    on = inf.run_chain(
        subs, scalar_priors(), inf.MCMCConfig(200, 400, 2, seed=1, population_shift=True), model=inf.LinearModel()
    )
    off = inf.run_chain(subs, scalar_priors(), inf.MCMCConfig(200, 400, 2, seed=1), model=inf.LinearModel())
    assert 0.0 < on.shift_acceptance < 1.0
    assert math.isnan(off.shift_acceptance)
    assert on.diagnostics["shift_acceptance"] == on.shift_acceptance


def reference_gibbs(subjects, priors, n_iter, seed):
    """Exact Gibbs sampler for the scalar linear hierarchy, written independently."""
    rng = np.random.default_rng(seed)
    a, b, eta = priors.a, priors.b, priors.eta[0]
    lam, omega, nu = priors.lam[0, 0], priors.omega[0, 0], priors.nu
    ys = [s.y for s in subjects]
    n = len(ys)
    theta = np.zeros(n)
    mu, s_inv = 0.0, 1.0
    out = np.empty((n_iter, 2))
    for k in range(n_iter):
        ssr = sum(((y - t) ** 2).sum() for y, t in zip(ys, theta))
        tau = rng.gamma(a + sum(map(len, ys)) / 2, 1 / (1 / b + ssr / 2))
        v = 1 / (n * s_inv + 1 / lam)
        mu = rng.normal(v * (s_inv * theta.sum() + eta / lam), math.sqrt(v))
        s_inv = rng.chisquare(n + nu) / (1 / omega + ((theta - mu) ** 2).sum())
        for i, y in enumerate(ys):
            pp = tau * len(y) + s_inv
            theta[i] = rng.normal((tau * y.sum() + s_inv * mu) / pp, 1 / math.sqrt(pp))
        out[k] = theta[0], mu
    return out


@pytest.mark.parametrize("shift", [True, False])
def test_full_chain_matches_exact_gibbs(shift):
    subjects = linear_subjects(3, seed=5)
    priors = scalar_priors()
    cfg = inf.MCMCConfig(burn_in=2000, post_iterations=100_000, thin=5, seed=3, population_shift=shift)
    chain = inf.run_chain(subjects, priors, cfg, model=inf.LinearModel())
    ref = reference_gibbs(subjects, priors, 100_000, seed=8)[2000::4]
    assert stats.ks_2samp(chain.theta[0, :, 0], ref[:, 0]).statistic < 0.03
    assert stats.ks_2samp(chain.mu[:, 0], ref[:, 1]).statistic < 0.03


class TestRunChain:
    cfg = inf.MCMCConfig(burn_in=200, post_iterations=300, thin=3, seed=42)

    def test_shapes(self):
        subs = linear_subjects(4, p=6, seed=1)
        ch = inf.run_chain(subs, inf.Hyperpriors(), self.cfg, model=inf.LinearModel())
        assert ch.n_draws == 100
        assert ch.theta.shape == (4, 100, 6)
        assert ch.sigma_inv.shape == (100, 6, 6)
        assert np.all((0 <= ch.acceptance_rates) & (ch.acceptance_rates <= 1))
        assert set(ch.diagnostics) >= {"log_c", "error_prec"}

    def test_default_schedule(self):
        assert inf.MCMCConfig().n_retained == 24_000

    def test_deterministic(self):
        subs = linear_subjects(4, p=6, seed=1)
        a = inf.run_chain(subs, inf.Hyperpriors(), self.cfg, model=inf.LinearModel())
        b = inf.run_chain(subs, inf.Hyperpriors(), self.cfg, model=inf.LinearModel())
        for name in ("mu", "sigma_inv", "error_prec", "theta", "acceptance_rates"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_worker_count_and_order_invariant(self):
        subs = linear_subjects(5, p=6, seed=2)
        a = inf.run_chain(subs, inf.Hyperpriors(), self.cfg, model=inf.LinearModel())
        b = inf.run_chain(subs[::-1], inf.Hyperpriors(), self.cfg, model=inf.LinearModel(), workers=3)
        np.testing.assert_array_equal(a.mu, b.mu)
        np.testing.assert_array_equal(a.theta, b.theta)
        assert a.subject_ids == b.subject_ids

    def test_seed_changes_output(self):
        subs = linear_subjects(3, p=6, seed=1)
        a = inf.run_chain(subs, inf.Hyperpriors(), self.cfg, model=inf.LinearModel())
        b = inf.run_chain(subs, inf.Hyperpriors(), inf.MCMCConfig(200, 300, 3, seed=43), model=inf.LinearModel())
        assert not np.array_equal(a.mu, b.mu)

    def test_prior_only_recovers_gamma_prior(self):
        subs, _ = synthetic_subjects(2)
        cfg = inf.MCMCConfig(burn_in=0, post_iterations=50_000, thin=1, seed=1)
        ch = inf.run_chain(subs, config=cfg, prior_only=True)
        mc_close(ch.error_prec, 40.5)
        assert ch.error_prec.var() == pytest.approx(4.5 * 81, rel=0.05)

    def test_validation(self):
        with pytest.raises(DomainError):
            inf.run_chain([], config=self.cfg)
        one = SubjectRecord("x", (0,), (4.0,), EfficacyInputs.constant(0.5, 1.0))
        with pytest.raises(DomainError):
            inf.run_chain([one], config=self.cfg)
        subs = linear_subjects(2, p=6)
        with pytest.raises(DomainError):
            inf.run_chain(subs + subs[:1], config=self.cfg, model=inf.LinearModel())

    def test_abort_reports_iteration(self, monkeypatch):
        calls = {"n": 0}
        real = inf.sample_population_precision

        def flaky(*args):
            calls["n"] += 1
            if calls["n"] == 7:
                raise LinAlgError("boom")
            return real(*args)

        monkeypatch.setattr(inf, "sample_population_precision", flaky)
        with pytest.raises(ChainAbortError) as exc:
            inf.run_chain(linear_subjects(2, p=6), config=self.cfg, model=inf.LinearModel())
        assert exc.value.iteration == 6
        assert exc.value.partial.iterations_completed == 6

    def test_progress_callback(self):
        seen = []
        inf.run_chain(
            linear_subjects(2, p=6),
            config=self.cfg,
            model=inf.LinearModel(),
            progress=lambda i, n: seen.append((i, n)),
            progress_every=100,
        )
        assert seen == [(100, 500), (200, 500), (300, 500), (400, 500), (500, 500)]


@pytest.fixture(scope="module")
def viral_chain():
    subs, truth = synthetic_subjects(6, seed=12, noise=0.0)
    cfg = inf.MCMCConfig(burn_in=3000, post_iterations=3000, thin=3, seed=5)
    init = inf.InitialValues(theta=truth, mu=truth.mean(0))
    return inf.run_chain(subs, config=cfg, init=init), truth


def test_zero_noise_concentrates_at_truth(viral_chain):
    chain, truth = viral_chain
    subs, _ = synthetic_subjects(6, seed=12, noise=0.0)
    med = np.median(chain.theta, axis=1)
    # the median fit stays well inside the 0.25 noise level of the noisy designs
    for th, s in zip(med, sorted(subs, key=lambda r: r.subject_id)):
        rms = math.sqrt(inf.ViralLoadModel().residual_ss(th, s) / len(s.days))
        assert rms < 0.25
    # parameters may slide along weakly identified ridges, but stay within a factor of two
    assert np.all(np.abs(med - truth) < math.log(2.0))


@pytest.mark.xfail(strict=True, reason="chain drifts along the c ridge by far more than the adapted step")
def test_zero_noise_median_within_one_proposal_scale(viral_chain):
    chain, truth = viral_chain
    assert np.all(np.abs(np.median(chain.theta, axis=1) - truth) <= chain.step_scales)


def test_acceptance_after_adaptation(viral_chain):
    chain, _ = viral_chain
    assert np.all((0.15 <= chain.acceptance_rates) & (chain.acceptance_rates <= 0.50))


class TestSummary:
    def _constant_chain(self):
        k, p = 50, 6
        theta = np.log(np.array([14.2, 4.7, 0.36, 0.016, 3.7, 2.6]))
        return inf.ChainOutput(
            subject_ids=("a", "b"),
            mu=np.tile(theta, (k, 1)),
            sigma_inv=np.tile(np.eye(p), (k, 1, 1)),
            error_prec=np.full(k, 16.0),
            theta=np.tile(theta, (2, k, 1)),
            acceptance_rates=np.zeros((2, p)),
            step_scales=np.zeros((2, p)),
            config=inf.MCMCConfig(),
            priors=inf.Hyperpriors(),
        )

    def test_constant_chain(self):
        s = inf.summarize(self._constant_chain())
        c = s.population["c"]
        assert c.lower == c.mean == c.upper == pytest.approx(4.7)
        assert s.subjects["b"]["R0"].mean == pytest.approx(2.6)
        assert s.error_sd.mean == 0.25
        assert s.across_subjects["delta"].sd == 0.0

    def test_cv_definition(self):
        cs = inf.cross_section([4.827 - 0.878, 4.827 + 0.878])
        assert cs.sd == pytest.approx(0.878 * math.sqrt(2))
        assert inf.CrossSection(0, 0, 0, 4.827, 0.878, 100 * 0.878 / 4.827).cv == pytest.approx(18.2, abs=0.05)

    def test_cv_from_values(self):
        v = [3.0, 4.0, 5.0, 8.0]
        cs = inf.cross_section(v)
        assert cs.cv == pytest.approx(100 * np.std(v, ddof=1) / np.mean(v))
        assert (cs.min, cs.median, cs.max) == (3.0, 4.5, 8.0)

    def test_normal_quantiles(self):
        x = np.random.default_rng(0).standard_normal(1_000_000)
        s = inf.equal_tail(x)
        assert s.lower == pytest.approx(-1.96, abs=0.01)
        assert s.upper == pytest.approx(1.96, abs=0.01)

    def test_empty(self):
        with pytest.raises(DomainError):
            inf.equal_tail([])
