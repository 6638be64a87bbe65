import math

import numpy as np
import pytest

from ocdm.core import ConfigurationError
from ocdm.duals import (
    DualState,
    LeftoverValueUtility,
    SeparableQuadraticUtility,
    UpperBoxSet,
    ZeroUtility,
    initial_duals,
    lemma1_step_sizes,
    omd_step,
    periodic_schedule_step_size,
    power_schedule_step_size,
    project_theta_box_ball,
    subgrad_phi,
    subgrad_xi,
)

ALL_UTILITIES = [
    ZeroUtility(2),
    LeftoverValueUtility([1.0, 2.0], [1.5, 0.5]),
    SeparableQuadraticUtility(2),
]


class TestSubgradients:
    def test_zero_utility(self):
        u = ZeroUtility(2)
        v = np.array([1.0, -0.5])
        assert np.array_equal(subgrad_xi(np.zeros(2), v, u), -v)

    def test_leftover_value_is_budget_minus_consumption(self):
        u = LeftoverValueUtility([1.0], [1.0])
        got = subgrad_xi(np.array([-0.5]), np.array([2.0]), u)
        assert np.array_equal(got, [-1.0])

    def test_quadratic_conjugate_subgradient(self):
        u = SeparableQuadraticUtility(1)
        got = subgrad_xi(np.array([0.0]), np.array([0.3]), u)
        assert np.allclose(got, [0.2])

    def test_quadratic_conjugate_against_numeric_maximization(self):
        u = SeparableQuadraticUtility(1)
        vs = np.linspace(-5, 5, 200001)
        for lam in (-0.8, -0.2, 0.0, 0.4, 1.0):
            numeric = np.max(lam * vs - (vs**2 - vs))
            assert abs(u.conj(np.array([lam])) - numeric) < 1e-6

    def test_upper_box_phi_subgradient(self):
        cset = UpperBoxSet([1.0, 1.0])
        assert np.array_equal(
            subgrad_phi(np.zeros(2), np.array([1.0, 1.0]), cset), [0.0, 0.0]
        )
        cset1 = UpperBoxSet([1.0])
        assert np.array_equal(subgrad_phi(np.zeros(1), np.array([3.0]), cset1), [-2.0])

    def test_box_conjugate_against_numeric_sup(self):
        cset = UpperBoxSet([0.8, 1.3])
        rng = np.random.default_rng(0)
        grid = np.linspace(-4, 4, 161)
        vs = np.array([(a, b) for a in grid for b in grid])
        dists = np.linalg.norm(np.maximum(vs - cset.b, 0.0), axis=1)
        for _ in range(20):
            theta = cset.project_theta(rng.normal(size=2))
            numeric = np.max(vs @ theta - dists)
            assert cset.conj(theta) >= numeric - 1e-9
            assert cset.conj(theta) - numeric < 1e-4 + 0.05  # grid resolution slack


class TestFenchelYoung:
    @pytest.mark.parametrize("utility", ALL_UTILITIES, ids=lambda u: type(u).__name__)
    def test_utility_inequality_and_equality(self, utility):
        rng = np.random.default_rng(1)
        quadratic = isinstance(utility, SeparableQuadraticUtility)
        for _ in range(2000):
            v = rng.uniform(0, 1, size=2) if quadratic else rng.uniform(0, 3, size=2)
            lam = utility.project_lambda(rng.normal(size=2) * 2)
            assert utility.contains_lambda(lam)
            gap = -utility.value(v) + utility.conj(lam) - lam @ v
            assert gap >= -1e-9
            star = utility.conj_argmax(v)
            assert utility.contains_lambda(star)
            eq = -utility.value(v) + utility.conj(star) - star @ v
            assert abs(eq) <= 1e-8

    def test_distance_inequality_and_equality(self):
        rng = np.random.default_rng(2)
        cset = UpperBoxSet([1.0, 0.7])
        for _ in range(2000):
            v = rng.uniform(-1, 3, size=2)
            theta = cset.project_theta(rng.normal(size=2) * 2)
            assert cset.contains_theta(theta)
            gap = cset.dist(v) + cset.conj(theta) - theta @ v
            assert gap >= -1e-9
            star = cset.conj_argmax(v)
            assert cset.contains_theta(star)
            eq = cset.dist(v) + cset.conj(star) - star @ v
            assert abs(eq) <= 1e-8

    @pytest.mark.parametrize("utility", ALL_UTILITIES, ids=lambda u: type(u).__name__)
    def test_utility_is_concave_and_zero_at_zero(self, utility):
        rng = np.random.default_rng(3)
        assert utility.value(np.zeros(2)) == 0.0
        for _ in range(500):
            a = rng.uniform(0, 1.5, size=2)
            b = rng.uniform(0, 1.5, size=2)
            mid = utility.value((a + b) / 2)
            assert mid >= 0.5 * (utility.value(a) + utility.value(b)) - 1e-12


class TestOmdStep:
    def test_zero_gradient_keeps_feasible_point(self):
        cset = UpperBoxSet([1.0, 1.0])
        theta = np.array([0.3, 0.4])
        out = omd_step(theta, np.zeros(2), 0.5, cset.project_theta)
        assert np.array_equal(out, theta)

    def test_interval_step(self):
        project = lambda z: np.clip(z, -1.0, 0.0)
        out = omd_step(np.array([0.0]), np.array([1.0]), 0.5, project)
        assert np.array_equal(out, [-0.5])

    def test_interval_step_clipped(self):
        project = lambda z: np.clip(z, -1.0, 0.0)
        out = omd_step(np.array([0.0]), np.array([-1.0]), 0.5, project)
        assert np.array_equal(out, [0.0])


class TestProjection:
    def test_already_feasible(self):
        z = np.array([0.3, 0.4])
        assert np.array_equal(project_theta_box_ball(z), z)

    def test_clamp_then_rescale(self):
        assert np.allclose(project_theta_box_ball(np.array([2.0, -1.0])), [1.0, 0.0])

    def test_orthant_clamp(self):
        assert np.array_equal(project_theta_box_ball(np.array([-5.0, -5.0])), [0.0, 0.0])

    def test_idempotent_and_feasible(self):
        rng = np.random.default_rng(4)
        for _ in range(500):
            z = rng.normal(size=3) * rng.uniform(0.1, 5)
            p1 = project_theta_box_ball(z)
            p2 = project_theta_box_ball(p1)
            assert np.array_equal(p1, p2)
            assert np.all(p1 >= 0) and np.linalg.norm(p1) <= 1 + 1e-9

    def test_matches_grid_search_nearest_point(self):
        # A 1e-3 grid over the domain: the projection must be at least as
        # close to z as every grid point, and the best grid point may beat
        # it by at most the grid resolution.
        grid = np.linspace(0, 1, 1001)
        pts = np.array([(a, b) for a in grid for b in grid])
        pts = pts[np.linalg.norm(pts, axis=1) <= 1.0]
        rng = np.random.default_rng(5)
        for _ in range(100):
            z = rng.normal(size=2) * 2
            proj = project_theta_box_ball(z)
            best_grid = float(np.min(np.linalg.norm(pts - z, axis=1)))
            assert np.linalg.norm(proj - z) <= best_grid + 1e-12
            assert best_grid - np.linalg.norm(proj - z) <= 1e-3

    def test_interior_points_match_grid_argmin_exactly(self):
        grid = np.linspace(0, 1, 1001)
        pts = np.array([(a, b) for a in grid for b in grid])
        pts = pts[np.linalg.norm(pts, axis=1) <= 1.0]
        rng = np.random.default_rng(15)
        for _ in range(50):
            z = rng.uniform(0, 0.7, size=2)
            proj = project_theta_box_ball(z)
            nearest = pts[np.argmin(np.linalg.norm(pts - z, axis=1))]
            assert np.array_equal(proj, z)
            assert np.linalg.norm(proj - nearest) <= 1e-3

    def test_hand_example_matches_grid_argmin(self):
        grid = np.linspace(0, 1, 1001)
        pts = np.array([(a, b) for a in grid for b in grid])
        pts = pts[np.linalg.norm(pts, axis=1) <= 1.0]
        z = np.array([2.0, -1.0])
        nearest = pts[np.argmin(np.linalg.norm(pts - z, axis=1))]
        assert np.allclose(project_theta_box_ball(z), [1.0, 0.0])
        assert np.array_equal(nearest, [1.0, 0.0])

    def test_lambda_projections_idempotent(self):
        rng = np.random.default_rng(6)
        for utility in ALL_UTILITIES:
            for _ in range(100):
                z = rng.normal(size=2) * 3
                p1 = utility.project_lambda(z)
                assert np.array_equal(utility.project_lambda(p1), p1)
                assert utility.contains_lambda(p1)


class TestStepSizes:
    def test_formula(self):
        assert lemma1_step_sizes(1.0, 1.0, 100) == 0.1
        assert lemma1_step_sizes(4.0, 2.0, 1) == 1.0

    def test_rejects_bad_inputs(self):
        with pytest.raises(ConfigurationError):
            lemma1_step_sizes(0.0, 1.0, 10)
        with pytest.raises(ConfigurationError):
            lemma1_step_sizes(1.0, -1.0, 10)
        with pytest.raises(ConfigurationError):
            lemma1_step_sizes(1.0, 1.0, 0)

    def test_power_schedule_reduces_to_lemma1_at_beta_one(self):
        assert power_schedule_step_size(2.0, 3.0, 50, 1.0) == lemma1_step_sizes(2.0, 3.0, 50)

    def test_periodic_schedule_reduces_at_period_one(self):
        assert periodic_schedule_step_size(2.0, 3.0, 50, 1) == lemma1_step_sizes(2.0, 3.0, 50)


def run_omd(utility, cset, consumptions, T):
    """Run both dual sequences with the prescribed constant step sizes."""
    dv = float(np.max(np.linalg.norm(consumptions, axis=1)))
    D_lam = utility.bregman_diameter_bound()
    D_th = cset.bregman_diameter_bound()
    G_lam = utility.conj_subgrad_norm_bound() + dv
    G_th = cset.conj_subgrad_norm_bound() + dv
    lam, theta = initial_duals(utility, cset)
    state = DualState(
        lam, theta,
        lemma1_step_sizes(D_lam, G_lam, T) if D_lam > 0 else 0.0,
        lemma1_step_sizes(D_th, G_th, T),
        D_lam, D_th, G_lam, G_th,
    )
    for v in consumptions:
        state.accumulate(v, utility, cset)
        state.update(v, utility, cset)
    return state


def best_fixed_dual_value(points, conj, v_sum, T):
    """min over a candidate grid of sum_t f_t = -v_sum @ p + T conj(p)."""
    return min(-float(v_sum @ p) + T * conj(p) for p in points)


class TestOmdRegret:
    def test_lambda_and_theta_regret_within_bound(self):
        rng = np.random.default_rng(7)
        T = 2000
        utility = SeparableQuadraticUtility(2)
        cset = UpperBoxSet([0.6, 0.6])
        consumptions = rng.uniform(0, 1, size=(T, 2))
        state = run_omd(utility, cset, consumptions, T)
        v_sum = consumptions.sum(axis=0)

        grid = np.linspace(-1, 1, 81)
        lam_pts = [np.array([a, b]) for a in grid for b in grid]
        best_lam = best_fixed_dual_value(lam_pts, utility.conj, v_sum, T)
        regret_lam = state.xi_acc - best_lam
        assert regret_lam <= 1.05 * 2 * state.G_lambda * math.sqrt(state.D_lambda * T)

        tg = np.linspace(0, 1, 81)
        th_pts = [np.array([a, b]) for a in tg for b in tg
                  if a * a + b * b <= 1.0]
        best_th = best_fixed_dual_value(th_pts, cset.conj, v_sum, T)
        regret_th = state.phi_acc - best_th
        assert regret_th <= 1.05 * 2 * state.G_theta * math.sqrt(state.D_theta * T)


class TestDualState:
    def test_iterates_stay_in_domain(self):
        rng = np.random.default_rng(8)
        utility = LeftoverValueUtility([1.0, 1.0], [0.8, 0.8])
        cset = UpperBoxSet([0.8, 0.8])
        lam, theta = initial_duals(utility, cset)
        state = DualState(lam, theta, 0.05, 0.05, 1.0, 1.0, 1.0, 1.0)
        for _ in range(300):
            v = rng.uniform(0, 2, size=2)
            state.update(v, utility, cset)
            assert utility.contains_lambda(state.lam)
            assert cset.contains_theta(state.theta)

    def test_initial_duals_are_feasible(self):
        for utility in ALL_UTILITIES:
            cset = UpperBoxSet([1.0, 1.0])
            lam, theta = initial_duals(utility, cset)
            assert utility.contains_lambda(lam)
            assert cset.contains_theta(theta)
            assert np.array_equal(theta, np.zeros(2))
