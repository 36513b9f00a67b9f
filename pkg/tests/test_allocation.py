import numpy as np
import pytest

from wsnfusion.allocation import (
    AVERAGE_J_SEARCH,
    COHERENT,
    CONDITIONAL_J_GRADIENT,
    NONCOHERENT_AMPLITUDE,
    NONCOHERENT_STATISTICS,
    STATISTICS_EXTREME_POINT,
    UNIFORM,
    allocate,
    allocate_average_j,
    allocate_data_conditional_j,
    allocate_data_conditional_j_batch,
    allocate_statistics_extreme_point,
    project_simplex,
    training_error_variances,
    uniform_plan,
)
from wsnfusion.divergence import (
    average_j_coherent,
    average_sensor_j,
    conditional_j,
    total_j_statistics,
    x_parameter,
)
from wsnfusion.errors import ConfigurationError
from wsnfusion.phy import FSK, PSK
from wsnfusion.scenario import NetworkScenario, PowerPlan, build_case, solve_p_total_for_snr
from wsnfusion.sensing import confusion_matrices, sources_for_errors


def _scenario(distances, m, snr_db):
    s = NetworkScenario.from_distances(distances, m)
    return s.with_p_total(solve_p_total_for_snr(s, snr_db))


def _conf(errors, m):
    return confusion_matrices(sources_for_errors(errors, m))


def _random_instance(rng, n, m=None, snr=None):
    m = m or int(rng.choice([2, 4]))
    s = _scenario(rng.uniform(1, 10, n), m, rng.uniform(-5, 20) if snr is None else snr)
    conf = _conf(rng.uniform(0.05, (m - 1) / m - 0.02, n), m)
    return s, conf


def _gains(rng, s, p_t):
    sh2, nv = s.channel_variances, s.noise_variance
    mean = sh2 ** 2 * (p_t / nv) / (1 + sh2 * p_t / nv)
    return rng.exponential(1.0, s.n_sensors) * mean


class TestUniform:
    def test_example(self):
        s = NetworkScenario.from_distances(np.arange(1, 6), 2, p_total=10.0)
        plan = uniform_plan(s, 0.5)
        np.testing.assert_allclose(plan.data_powers, 1.0)
        np.testing.assert_allclose(plan.training_powers, 1.0)
        assert plan.sensor_powers.sum() == pytest.approx(10.0, rel=1e-15)

    def test_all_data(self):
        s = NetworkScenario.from_distances([1, 2], 2, p_total=3.0)
        assert np.all(uniform_plan(s, 1.0).training_powers == 0)

    def test_range(self):
        with pytest.raises(ConfigurationError):
            uniform_plan(NetworkScenario.from_distances([1], 2), 1.5)


class TestProjection:
    @staticmethod
    def _bisect_oracle(v):
        lo, hi = v.min() - 1, v.max()
        for _ in range(200):
            mid = (lo + hi) / 2
            if np.maximum(v - mid, 0).sum() > 1:
                lo = mid
            else:
                hi = mid
        return np.maximum(v - (lo + hi) / 2, 0)

    def test_against_bisection(self):
        rng = np.random.default_rng(0)
        v = rng.normal(0, 3, (200, 6))
        got = project_simplex(v)
        for row, g in zip(v, got):
            np.testing.assert_allclose(g, self._bisect_oracle(row), atol=1e-12)
        np.testing.assert_allclose(got.sum(axis=1), 1.0, atol=1e-12)

    def test_fixed_point(self):
        w = np.array([0.2, 0.0, 0.8])
        np.testing.assert_allclose(project_simplex(w), w, atol=1e-15)


class TestConditionalJ:
    def test_single_sensor(self):
        s, conf = _random_instance(np.random.default_rng(1), 1)
        res = allocate_data_conditional_j([1e-6], conf, s, 5.0, [1.0])
        assert res.plan.data_powers[0] == pytest.approx(5.0, rel=1e-15)

    def test_identical_sensors_split_evenly(self):
        s = _scenario([3.0, 3.0], 2, 10.0)
        conf = _conf([0.2, 0.2], 2)
        p_t = np.full(2, s.p_total / 4)
        g = np.full(2, 2e-7)
        res = allocate_data_conditional_j(g, conf, s, s.p_total / 2, p_t)
        np.testing.assert_allclose(res.plan.data_powers / (s.p_total / 2), 0.5, atol=1e-6)

    @pytest.mark.parametrize("mod", [PSK, FSK])
    def test_two_sensor_grid_oracle(self, mod):
        rng = np.random.default_rng(2)
        for _ in range(5):
            s, conf = _random_instance(rng, 2)
            p_t = np.full(2, s.p_total / 4)
            g = _gains(rng, s, p_t)
            budget = s.p_total / 2
            res = allocate_data_conditional_j(g, conf, s, budget, p_t, mod)
            err = training_error_variances(s, p_t, mod)
            grid = np.linspace(0, 1, 1001)
            vals = [conditional_j(conf, g, PowerPlan([a * budget, (1 - a) * budget], p_t), err,
                                  s.priors, mod, s.noise_variance).total for a in grid]
            assert res.objective >= max(vals) - 1e-9 * max(1.0, max(vals))
            best = grid[int(np.argmax(vals))]
            assert abs(res.plan.data_powers[0] / budget - best) <= 2e-3 or \
                res.objective - max(vals) >= -1e-12

    def test_beats_uniform(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n = int(rng.integers(1, 6))
            s, conf = _random_instance(rng, n)
            p_t = np.full(n, s.p_total / (2 * n))
            g = _gains(rng, s, p_t)
            res = allocate_data_conditional_j(g, conf, s, s.p_total / 2, p_t)
            uni = PowerPlan(np.full(n, s.p_total / (2 * n)), p_t)
            ref = conditional_j(conf, g, uni, training_error_variances(s, p_t, PSK), s.priors, PSK,
                                s.noise_variance).total
            assert res.objective >= ref - 1e-10
            assert res.plan.sensor_powers.sum() <= s.p_total * (1 + 1e-12)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(4)
        s, conf = _random_instance(rng, 4)
        p_t = np.full(4, s.p_total / 8)
        g = np.stack([_gains(rng, s, p_t) for _ in range(5)])
        p_d, f, info = allocate_data_conditional_j_batch(g, conf, s, s.p_total / 2, p_t)
        for row in range(5):
            single = allocate_data_conditional_j(g[row], conf, s, s.p_total / 2, p_t)
            np.testing.assert_allclose(single.plan.data_powers, p_d[row], rtol=1e-12, atol=1e-9)
            assert single.objective == pytest.approx(f[row], rel=1e-9)

    def test_objective_matches_divergence(self):
        rng = np.random.default_rng(5)
        s, conf = _random_instance(rng, 3)
        p_t = np.full(3, s.p_total / 6)
        g = _gains(rng, s, p_t)
        res = allocate_data_conditional_j(g, conf, s, s.p_total / 2, p_t)
        ref = conditional_j(conf, g, res.plan, training_error_variances(s, p_t, PSK), s.priors, PSK,
                            s.noise_variance).total
        assert res.objective == pytest.approx(ref, rel=1e-9, abs=1e-12)
        assert res.solver == CONDITIONAL_J_GRADIENT

    def test_budget_monotone(self):
        rng = np.random.default_rng(6)
        s, conf = _random_instance(rng, 4, snr=5.0)
        p_t = np.full(4, s.p_total / 8)
        g = _gains(rng, s, p_t)
        vals = [allocate_data_conditional_j(g, conf, s, b, p_t).objective
                for b in np.linspace(0.1, 0.5, 5) * s.p_total]
        assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))

    def test_deterministic(self):
        rng = np.random.default_rng(7)
        s, conf = _random_instance(rng, 5)
        p_t = np.full(5, s.p_total / 10)
        g = _gains(rng, s, p_t)
        a = allocate_data_conditional_j(g, conf, s, s.p_total / 2, p_t)
        b = allocate_data_conditional_j(g, conf, s, s.p_total / 2, p_t)
        assert np.array_equal(a.plan.data_powers, b.plan.data_powers) and a.objective == b.objective


class TestAverageJ:
    def test_identical_sensors(self):
        s = _scenario([4.0, 4.0, 4.0], 2, 5.0)
        res = allocate_average_j(s, _conf([0.2, 0.2, 0.2], 2))
        np.testing.assert_allclose(res.plan.sensor_powers / s.p_total, 1 / 3, atol=1e-6)

    def test_half_split_and_budget(self):
        rng = np.random.default_rng(8)
        s, conf = _random_instance(rng, 5)
        res = allocate_average_j(s, conf)
        powered = res.plan.sensor_powers > 0
        np.testing.assert_array_equal(res.plan.data_fractions[powered], 0.5)
        assert res.plan.sensor_powers.sum() == pytest.approx(s.p_total, rel=1e-12)
        assert res.diagnostics["starts"] >= 8
        assert res.objective == pytest.approx(average_j_coherent(s, res.plan, conf).total, rel=1e-12)

    def test_two_sensor_grid_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(5):
            s, conf = _random_instance(rng, 2)
            res = allocate_average_j(s, conf)
            axis = np.linspace(0, 1, 200)
            a, b = np.meshgrid(axis, axis, indexing="ij")
            keep = a + b <= 1 + 1e-12
            pk = np.stack([a[keep], b[keep]], axis=1) * s.p_total
            x = x_parameter(s.channel_variances, np.where(pk > 0, pk, 1.0), 0.5, s.noise_variance)
            vals = np.where(pk > 0, average_sensor_j(conf, x, s.priors), 0.0).sum(axis=1)
            best = vals.max()
            # spot-check the vectorized grid against the public evaluator
            i = int(np.argmax(vals))
            ref = average_j_coherent(s, PowerPlan(pk[i] / 2, pk[i] / 2), conf).total
            assert best == pytest.approx(ref, rel=1e-12)
            assert res.objective >= best - 1e-9 * max(1.0, best)

    def test_beats_uniform(self):
        rng = np.random.default_rng(10)
        for _ in range(10):
            s, conf = _random_instance(rng, int(rng.integers(2, 6)))
            res = allocate_average_j(s, conf)
            uni = average_j_coherent(s, uniform_plan(s, 0.5), conf).total
            assert res.objective >= uni - 1e-12

    def test_budget_monotone(self):
        rng = np.random.default_rng(11)
        s, conf = _random_instance(rng, 4, snr=0.0)
        vals = [allocate_average_j(s.with_p_total(f * s.p_total), conf).objective
                for f in (0.25, 0.5, 1, 2, 4)]
        assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))


class TestExtremePoint:
    def test_candidate_count(self):
        rng = np.random.default_rng(12)
        s, conf = _random_instance(rng, 3)
        res = allocate_statistics_extreme_point(s, conf)
        assert res.diagnostics["candidates"] == 4
        assert res.diagnostics["vertex"] > 0
        assert np.count_nonzero(res.plan.data_powers) == 1
        assert res.plan.data_powers.sum() == pytest.approx(s.p_total)

    def test_best_vertex(self):
        rng = np.random.default_rng(13)
        s, conf = _random_instance(rng, 4)
        res = allocate_statistics_extreme_point(s, conf)
        for k in range(4):
            p = np.zeros(4)
            p[k] = s.p_total
            assert res.objective >= total_j_statistics(s, p, conf).total

    def test_noninformative_origin(self):
        s = _scenario([1.0, 2.0], 2, 10.0)
        res = allocate_statistics_extreme_point(s, np.full((2, 2, 2), 0.5))
        assert res.diagnostics["vertex"] == 0

    def test_low_snr_dominates_interior(self):
        # In the low-SNR regime the objective is convex and a vertex wins.
        rng = np.random.default_rng(14)
        for _ in range(10):
            s, conf = _random_instance(rng, 2, snr=-10.0)
            res = allocate_statistics_extreme_point(s, conf)
            for a in np.linspace(0, 1, 1001):
                val = total_j_statistics(s, [a * s.p_total, (1 - a) * s.p_total], conf).total
                assert res.objective >= val - 1e-12


class TestFacade:
    def test_uniform(self):
        s, err = build_case("V-A1", 5, 2)
        conf = _conf(err, 2)
        res = allocate(UNIFORM, COHERENT, s, conf, r=0.5)
        assert np.array_equal(res.plan.data_powers, uniform_plan(s, 0.5).data_powers)
        assert np.isfinite(res.objective)

    def test_statistics_forces_all_data(self):
        s, err = build_case("V-A1", 5, 2)
        res = allocate(UNIFORM, NONCOHERENT_STATISTICS, s, _conf(err, 2), r=0.5)
        assert np.all(res.plan.training_powers == 0)

    @pytest.mark.parametrize("strategy,receiver", [
        (STATISTICS_EXTREME_POINT, COHERENT),
        (AVERAGE_J_SEARCH, NONCOHERENT_AMPLITUDE),
        (CONDITIONAL_J_GRADIENT, NONCOHERENT_STATISTICS),
        ("bogus", COHERENT),
    ])
    def test_incompatible(self, strategy, receiver):
        s, err = build_case("V-A1", 5, 2)
        with pytest.raises(ConfigurationError):
            allocate(strategy, receiver, s, _conf(err, 2), g_hat=np.ones(5))

    def test_conditional_needs_estimate(self):
        s, err = build_case("V-A1", 5, 2)
        with pytest.raises(ConfigurationError):
            allocate(CONDITIONAL_J_GRADIENT, COHERENT, s, _conf(err, 2))

    def test_average_half_split(self):
        s, err = build_case("V-A1", 5, 2)
        res = allocate(AVERAGE_J_SEARCH, COHERENT, s, _conf(err, 2))
        powered = res.plan.sensor_powers > 0
        assert np.all(res.plan.data_fractions[powered] == 0.5)

    def test_conditional_training_uniform(self):
        s, err = build_case("V-A1", 5, 2)
        g = _gains(np.random.default_rng(15), s, np.full(5, 0.3 * s.p_total / 5))
        res = allocate(CONDITIONAL_J_GRADIENT, NONCOHERENT_AMPLITUDE, s, _conf(err, 2), g_hat=g, r=0.7)
        np.testing.assert_allclose(res.plan.training_powers, 0.3 * s.p_total / 5)
        assert res.plan.data_powers.sum() == pytest.approx(0.7 * s.p_total)
