import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_channels, small_scenario
from mbnsim import baselines, fp, ho
from mbnsim.metrics import AssociationState, HOCostParams
from mbnsim.results import STATUS_INFEASIBLE
from mbnsim.scenario import step_trajectory, synthesize_channels, generate_topology


class TestJensenObjective:
    def test_single_user_at_e(self):
        e = np.e
        got = ho.jensen_objective(np.array([e]), np.array([e]))
        assert got == pytest.approx(2.0)
        assert got <= 2 * e

    def test_equal_rates_gap_matches_hand_formula(self):
        r = 3.7
        k = 4
        got = ho.jensen_objective(np.full(k, r), np.full(k, r))
        # (1/2K) * 2K ln r + 1
        assert got == pytest.approx(np.log(r) + 1.0)
        assert 2 * k * r - got == pytest.approx(2 * k * r - np.log(r) - 1.0)

    def test_lower_bound_on_random_tuples(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            k = rng.integers(1, 6)
            rt = rng.uniform(1e-3, 50.0, k)
            ru = rng.uniform(1e-3, 50.0, k)
            assert ho.jensen_objective(rt, ru) <= np.sum(rt + ru) + 1e-9


class TestTransformedQos:
    def test_threshold_rate_satisfies(self):
        # both band rates at the threshold leave a log(2) margin
        assert ho.transform_qos_jensen(1.0, 1.0, 1.0) == pytest.approx(np.log(2.0))

    def test_vanishing_band_rate_fails_even_if_sum_passes(self):
        assert ho.transform_qos_jensen(1e-12, 10.0, 1.0) < 0

    def test_implication_on_random_tuples(self):
        rng = np.random.default_rng(1)
        violations = 0
        for _ in range(1000):
            rt, ru = rng.uniform(1e-3, 20.0, 2)
            th = rng.uniform(1e-3, 20.0)
            if ho.transform_qos_jensen(rt, ru, th) >= 0 and rt + ru < th:
                violations += 1
        assert violations == 0


class TestConcavityRegion:
    def test_cap_arithmetic(self):
        assert ho.ho_addition_cap(0.4) == 2
        assert ho.ho_addition_cap(0.5) == 1
        assert ho.ho_addition_cap(0.7) == 1
        assert ho.ho_addition_cap(0.09) == 11

    def test_all_previous_links_make_constraint_vacuous(self):
        coeff, bound = ho.check_log_concavity_region(np.ones((3, 2)), 0.4)
        np.testing.assert_array_equal(coeff, 0.0)
        assert bound == pytest.approx(2.5)

    def test_hessian_leading_element_nonpositive_on_grid(self):
        for x in np.arange(0.05, 0.951, 0.05):
            for y in (0.0, 0.5, 0.9):
                assert ho.ho_log_rate_curvature(float(x), y) <= 1e-8


def two_point_setup(seed, **overrides):
    scn = small_scenario(**overrides)
    rng = np.random.default_rng(seed)
    topo = generate_topology(scn, rng)
    est1, _ = synthesize_channels(scn, topo, topo.user_x, rng)
    x2 = step_trajectory(topo.user_x, scn.speed_mps, scn.window_s, scn.corridor_length)
    est2, _ = synthesize_channels(scn, topo, x2, rng, blockage=est1.blockage)
    return scn, est1, est2


class TestRunHoCost:
    def test_frozen_when_retention_pins_everything(self):
        scn, est1, est2 = two_point_setup(2)
        prev = baselines.nearest_association(est2, scn.cluster_t, scn.cluster_u)
        floor = int(prev.thz.sum(axis=0).min() + prev.umb.sum(axis=0).min())
        costs = HOCostParams(min_retained=floor)
        res = ho.run_ho_cost(scn, est2, prev, costs=costs)
        np.testing.assert_array_equal(res.assoc.thz, prev.thz)
        np.testing.assert_array_equal(res.assoc.umb, prev.umb)
        assert res.total_hos == 0

    def test_reports_effective_rate_and_caps_handovers(self):
        scn, est1, est2 = two_point_setup(3)
        first = fp.run_algorithm1(scn, est1)
        costs = HOCostParams(eta_thz=0.7, eta_umb=0.7, min_retained=1)
        res = ho.run_ho_cost(scn, est2, first.assoc, costs=costs)
        assert res.status != STATUS_INFEASIBLE
        cap = ho.ho_addition_cap(0.7)
        assert np.all(res.ho_counts_t <= cap) and np.all(res.ho_counts_u <= cap)
        assert res.ho_sum_rate_bps <= res.sum_rate_bps + 1e-6

    def test_transformed_qos_is_sufficient(self):
        scn, est1, est2 = two_point_setup(4, qos_gbps=0.05)
        first = fp.run_algorithm1(scn, est1)
        res = ho.run_ho_cost(scn, est2, first.assoc)
        if res.status != STATUS_INFEASIBLE:
            from mbnsim.metrics import ho_aware_rates

            effective = ho_aware_rates(
                res.rates_t_bps, res.rates_u_bps, res.ho_counts_t, res.ho_counts_u, scn.ho
            )
            assert np.all(effective >= 0.05e9 * (1 - 1e-6))


class TestRunMoop:
    def test_weight_zero_no_floor_reproduces_plain_solver(self):
        scn, est1, est2 = two_point_setup(5, min_retained=0, moop_weight=0.0)
        first = fp.run_algorithm1(scn, est1)
        plain = fp.run_algorithm1(scn, est2, prev_assoc=first.assoc)
        collapsed = ho.run_moop(scn, est2, first.assoc)
        assert plain.sum_rate_bps == collapsed.sum_rate_bps
        np.testing.assert_array_equal(plain.assoc.thz, collapsed.assoc.thz)
        np.testing.assert_array_equal(plain.assoc.umb, collapsed.assoc.umb)
        np.testing.assert_array_equal(plain.rates_bps, collapsed.rates_bps)

    def test_huge_weight_avoids_handovers(self):
        scn, est1, est2 = two_point_setup(6)
        first = fp.run_algorithm1(scn, est1)
        costs = HOCostParams(moop_weight=1e4, min_retained=0)
        res = ho.run_moop(scn, est2, first.assoc, costs=costs)
        assert res.total_hos == 0

    def test_logs_both_utilities(self):
        scn, est1, est2 = two_point_setup(7)
        first = fp.run_algorithm1(scn, est1)
        res = ho.run_moop(scn, est2, first.assoc, costs=HOCostParams(moop_weight=1.0))
        assert res.status != STATUS_INFEASIBLE
        assert res.sum_rate_bps > 0
        assert res.total_hos >= 0
        assert len(res.objective_trace) == res.iterations
