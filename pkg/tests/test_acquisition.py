import numpy as np
import pytest

from coxbo.acquisition import (
    AcquisitionSpec,
    RunLengthPosterior,
    acq_changepoint,
    acq_cumulative,
    acq_idle,
    acq_ucb,
    changepoint_probabilities,
    changepoint_trace,
    cpd_step,
    score_candidates,
)
from coxbo.bo import Region
from coxbo.errors import InputError, NumericError
from coxbo.inference import DualCoefficients, EventSet, Posterior
from coxbo.kernels import uniform_grid
from coxbo.links import LinkFunction

QUAD = LinkFunction("quadratic")


def make_posterior(mean_g, std, lo=0.0, hi=10.0, link=QUAD):
    mean_g = np.asarray(mean_g, dtype=float)
    m = mean_g.shape[0]
    grid = uniform_grid([lo], [hi], [m])
    std = np.broadcast_to(np.asarray(std, dtype=float), (m,)).copy()
    intensity = np.asarray([float(v) for v in np.atleast_1d(mean_g)]) ** 2
    if link.kind != "quadratic":
        from coxbo.links import kappa

        intensity = np.asarray(kappa(link, mean_g))
    return Posterior(
        grid=grid,
        mean_g=mean_g,
        intensity=intensity,
        covariance=np.diag(std**2),
        std=std,
        link=link,
        dual=DualCoefficients(np.zeros(0)),
    )


class TestUCB:
    def test_zero_std_reduces_to_max_mean(self):
        post = make_posterior(np.linspace(0, 3, 20), 0.0)
        region = Region([5.0], 2.5)
        pts = post.grid.points[:, 0]
        mask = (pts >= 2.5) & (pts <= 7.5)
        assert acq_ucb(post, region, 0.8) == pytest.approx(np.max(post.mean_g[mask]))

    def test_single_point_formula(self):
        post = make_posterior(np.full(10, 1.0), 0.5)
        score = acq_ucb(post, Region([5.0], 0.6), 0.8)
        assert score == pytest.approx(1.0 + 0.8 * 0.5)

    def test_zero_omega_orders_by_mean(self):
        rng = np.random.default_rng(0)
        post = make_posterior(rng.uniform(0, 2, 50), rng.uniform(0, 1, 50))
        regions = [Region([c], 1.0) for c in (1.0, 3.0, 5.0, 7.0, 9.0)]
        by_ucb = np.argsort([acq_ucb(post, r, 0.0) for r in regions])
        def max_mean(r):
            lo, hi = r.box()
            pts = post.grid.points[:, 0]
            return np.max(post.mean_g[(pts >= lo[0]) & (pts <= hi[0])])
        by_mean = np.argsort([max_mean(r) for r in regions])
        np.testing.assert_array_equal(by_ucb, by_mean)

    def test_constant_shift_invariance(self):
        rng = np.random.default_rng(1)
        mean = rng.uniform(0, 2, 40)
        std = rng.uniform(0, 1, 40)
        post = make_posterior(mean, std)
        shifted = make_posterior(mean + 2.5, std)
        regions = [Region([c], 1.5) for c in (2.0, 5.0, 8.0)]
        base = [acq_ucb(post, r, 0.8) for r in regions]
        moved = [acq_ucb(shifted, r, 0.8) for r in regions]
        np.testing.assert_allclose(np.array(moved) - np.array(base), 2.5, atol=1e-12)
        assert np.argmax(base) == np.argmax(moved)

    def test_region_outside_domain(self):
        post = make_posterior(np.ones(10), 0.1)
        with pytest.raises(InputError):
            acq_ucb(post, Region([20.0], 1.0), 0.8)


class TestIdleAndCumulative:
    def test_zero_mass_region_is_certain_idle(self):
        post = make_posterior(np.zeros(20), 0.0)
        region = Region([5.0], 1.0)
        for eps in (0, 1, 5):
            assert acq_idle(post, region, 0.8, eps) == pytest.approx(1.0)

    def test_unit_mass_zero_threshold(self):
        # kappa(g + 0*std) = 1 over a length-1 region gives mass 1
        post = make_posterior(np.ones(100), 0.0)
        region = Region([5.0], 0.5)
        assert acq_idle(post, region, 0.8, 0) == pytest.approx(np.exp(-1.0), rel=1e-6)

    def test_idle_monotone_in_epsilon(self):
        post = make_posterior(np.linspace(0.5, 2.0, 30), 0.3)
        region = Region([4.0], 2.0)
        scores = [acq_idle(post, region, 0.8, eps) for eps in range(6)]
        assert np.all(np.diff(scores) >= 0)

    def test_cumulative_zero_threshold_is_one(self):
        post = make_posterior(np.linspace(0.5, 2.0, 30), 0.3)
        assert acq_cumulative(post, Region([4.0], 2.0), 0.8, 0) == 1.0

    def test_mass_two_at_least_one(self):
        post = make_posterior(np.sqrt(2.0) * np.ones(100), 0.0)
        region = Region([5.0], 0.5)
        assert acq_cumulative(post, region, 0.8, 1) == pytest.approx(1 - np.exp(-2.0), rel=1e-6)

    def test_complementarity(self):
        rng = np.random.default_rng(2)
        post = make_posterior(rng.uniform(0.2, 1.5, 60), rng.uniform(0, 0.5, 60))
        for eps in (0, 1, 3, 7):
            for center in (2.0, 5.0, 8.0):
                region = Region([center], 1.2)
                idle = acq_idle(post, region, 0.8, eps)
                cum = acq_cumulative(post, region, 0.8, eps + 1)
                assert abs(idle + cum - 1.0) <= 1e-12

    def test_outputs_in_unit_interval(self):
        rng = np.random.default_rng(3)
        post = make_posterior(rng.uniform(0, 3, 40), rng.uniform(0, 1, 40))
        for r in (Region([3.0], 1.0), Region([7.0], 2.0)):
            assert 0.0 <= acq_idle(post, r, 0.8, 2) <= 1.0
            assert 0.0 <= acq_cumulative(post, r, 0.8, 3) <= 1.0


class TestCpdStep:
    def test_hazard_one_forces_reset(self):
        rlp = RunLengthPosterior(np.array([0.3, 0.5, 0.2]), 2)
        out = cpd_step(rlp, 2, [1.0, 2.0, 3.0], 1.0)
        assert out.masses[0] == pytest.approx(1.0)
        np.testing.assert_allclose(out.masses[1:], 0.0)

    def test_vanishing_hazard_starves_reset(self):
        rlp = RunLengthPosterior(np.array([0.5, 0.5]), 1)
        out = cpd_step(rlp, 1, [1.0, 1.0], 1e-12)
        assert out.masses[0] == pytest.approx(0.0, abs=1e-11)

    def test_two_step_hand_recursion(self):
        # direct enumeration with H = 0.5 and a constant predictive p:
        # step 1: P(0) = H, P(1) = 1 - H; step 2 identical because pi cancels
        H = 0.5
        rlp = RunLengthPosterior.initial()
        s1 = cpd_step(rlp, 3, [2.0], H)
        np.testing.assert_allclose(s1.masses, [0.5, 0.5], atol=1e-12)
        s2 = cpd_step(s1, 3, [2.0, 2.0], H)
        # enumeration: growth (0.5p*0.5, 0.5p*0.5), change 0.5p*0.5+0.5p*0.5
        np.testing.assert_allclose(s2.masses, [0.5, 0.25, 0.25], atol=1e-12)

    def test_varying_predictive_hand_computation(self):
        # direct enumeration: change mass H*pi_fresh, growth masses m_r*pi_r*(1-H)
        H = 0.3
        masses = np.array([0.4, 0.6])
        rlp = RunLengthPosterior(masses, 1)
        lam = np.array([1.0, 3.0])
        count = 2
        pi = np.exp(count * np.log(lam) - lam - np.log(2.0))
        expected = np.concatenate(([H * pi[0]], masses * pi * (1 - H)))
        expected /= expected.sum()
        out = cpd_step(rlp, count, lam, H)
        np.testing.assert_allclose(out.masses, expected, atol=1e-12)

    def test_normalization_over_500_steps(self):
        rng = np.random.default_rng(4)
        rlp = RunLengthPosterior.initial()
        for k in range(500):
            lam = rng.uniform(0.5, 4.0, rlp.size)
            count = int(rng.poisson(2.0))
            rlp = cpd_step(rlp, count, lam, 0.1)
            assert abs(rlp.masses.sum() - 1.0) <= 1e-10
            assert np.all(rlp.masses >= 0)
        assert rlp.size == 501

    def test_underflow_raises(self):
        rlp = RunLengthPosterior.initial()
        with pytest.raises(NumericError):
            cpd_step(rlp, 5, [0.0], 0.5)  # zero rate cannot produce 5 events

    def test_wrong_predictive_length(self):
        rlp = RunLengthPosterior.initial()
        with pytest.raises(InputError):
            cpd_step(rlp, 1, [1.0, 2.0], 0.5)


class TestChangePointProbabilities:
    def test_initial_state_is_all_reset_mass(self):
        rlp = RunLengthPosterior.initial()
        assert rlp.masses[0] == 1.0 and rlp.size == 1

    def test_null_model_sits_at_hazard(self):
        # constant rates make every predictive equal, so P(r=0) = H exactly
        rng = np.random.default_rng(5)
        counts = rng.poisson(2.0, 100)
        rates = np.full(100, 2.0)
        probs = changepoint_probabilities(counts, rates, 0.1)
        np.testing.assert_allclose(probs, 0.1, atol=1e-12)

    def test_rate_jump_is_localized(self):
        # simulation oracle: 10x jump at bin 60 of 100
        rng = np.random.default_rng(6)
        true_rate = np.where(np.arange(100) < 60, 1.0, 10.0)
        counts = rng.poisson(true_rate)
        probs = changepoint_probabilities(counts, true_rate, 0.1)
        assert abs(int(np.argmax(probs)) - 60) <= 3

    def test_trace_requires_one_dimension(self):
        grid = uniform_grid([0.0, 0.0], [1.0, 1.0], [4, 4])
        post = Posterior(
            grid=grid,
            mean_g=np.ones(16),
            intensity=np.ones(16),
            covariance=np.eye(16),
            std=np.ones(16),
            link=QUAD,
            dual=DualCoefficients(np.zeros(0)),
        )
        events = EventSet(np.zeros((0, 2)), [0.0, 0.0], [1.0, 1.0])
        with pytest.raises(InputError):
            changepoint_trace(post, events)

    def test_trace_and_region_reduction(self):
        post = make_posterior(np.ones(50), 0.1, 0.0, 100.0)
        events = EventSet(np.array([[5.0], [15.0], [70.0], [71.0], [72.0]]), [0.0], [100.0])
        trace = changepoint_trace(post, events, hazard_rate=0.1, num_bins=20)
        assert trace.change_probs.shape == (20,)
        score = acq_changepoint(post, Region([70.0], 5.0), trace)
        assert 0.0 <= score <= 1.0
        full = acq_changepoint(post, Region([50.0], 50.0), trace)
        assert full == pytest.approx(np.max(trace.change_probs))


class TestScoreCandidates:
    def test_dispatch_matches_single_scores(self):
        rng = np.random.default_rng(7)
        post = make_posterior(rng.uniform(0.3, 1.5, 40), rng.uniform(0.05, 0.4, 40))
        regions = [Region([c], 1.0) for c in (2.0, 5.0, 8.0)]
        events = EventSet(rng.uniform(0, 10, (12, 1)), [0.0], [10.0])
        ucb = score_candidates(post, regions, AcquisitionSpec("ucb", omega=0.8), events)
        np.testing.assert_allclose(ucb, [acq_ucb(post, r, 0.8) for r in regions])
        idle = score_candidates(post, regions, AcquisitionSpec("idle", epsilon=1), events)
        np.testing.assert_allclose(idle, [acq_idle(post, r, 0.8, 1) for r in regions])
        cum = score_candidates(post, regions, AcquisitionSpec("cumulative", xi=2), events)
        np.testing.assert_allclose(cum, [acq_cumulative(post, r, 0.8, 2) for r in regions])
        cpd = score_candidates(post, regions, AcquisitionSpec("cpd"), events)
        assert cpd.shape == (3,)
        assert np.all((cpd >= 0) & (cpd <= 1))


def test_acquisition_spec_validation():
    with pytest.raises(InputError):
        AcquisitionSpec("peak")
    with pytest.raises(InputError):
        AcquisitionSpec("ucb", hazard_rate=0.0)
    with pytest.raises(InputError):
        AcquisitionSpec("ucb", epsilon=-1)
    with pytest.raises(InputError):
        AcquisitionSpec("ucb", omega_sign=0.5)
