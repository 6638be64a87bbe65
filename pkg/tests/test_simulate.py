import numpy as np
import pytest

from ocdm.core import Arrival, ConfigurationError
from ocdm.datagen import instance_rng, make_knapsack_instance, make_longest_path_instance
from ocdm.duals import LeftoverValueUtility, UpperBoxSet, ZeroUtility
from ocdm.losses import LossKind
from ocdm.simulate import (
    EpisodeConfig,
    PeriodicSchedule,
    PowerSchedule,
    Trajectory,
    compute_objective,
    relative_regret,
    run_episode,
    run_single_trial,
    run_trials,
    update_schedule,
)


def constant_arrivals(r, V, count):
    d = len(r)
    for _ in range(count):
        yield Arrival(np.zeros(1), np.array(r, float), np.array(V, float))


class TestUpdateSchedule:
    def test_periodic(self):
        assert update_schedule(PeriodicSchedule(10), 25) == [10, 20]

    def test_power_one_is_every_step(self):
        assert update_schedule(PowerSchedule(1.0), 5) == [1, 2, 3, 4, 5]

    def test_power_three_halves(self):
        assert update_schedule(PowerSchedule(1.5), 27) == [1, 2, 5, 8, 11, 14, 18, 22, 27]

    @pytest.mark.parametrize("beta", [1.0, 1.5, 2.0])
    @pytest.mark.parametrize("T", [100, 1000, 10000])
    def test_power_count_is_T_to_the_inverse_beta(self, beta, T):
        count = len(update_schedule(PowerSchedule(beta), T))
        assert abs(count - int(T ** (1.0 / beta))) <= 1

    def test_invalid_schedules_rejected(self):
        with pytest.raises(ConfigurationError):
            PeriodicSchedule(0)
        with pytest.raises(ConfigurationError):
            PowerSchedule(0.5)


class TestStoppingTime:
    def make_instance(self):
        # micro-instance: d = m = 1, identity-ish consumption of 2 per round
        return make_knapsack_instance(p=2, d=1, m=1, deg=1, noise_halfwidth=0.0,
                                      k=1, b=[1.0], seed=0)

    def test_constant_overconsumption_stops_at_six(self):
        inst = self.make_instance()
        cfg = EpisodeConfig(horizon=10, mode="hard", zeta=1.0, predictor="hindsight",
                            check_decisions=False)
        arrivals = constant_arrivals([1.0], [[2.0]], 10)
        traj = run_episode(cfg, inst, arrivals)
        # cumulative consumption 2t; (1/10) * 2t > 1 first at t = 6
        assert traj.tau == 6
        assert traj.n_rounds == 6

    def test_no_records_after_stop_and_membership_holds_before(self):
        inst = self.make_instance()
        cfg = EpisodeConfig(horizon=10, mode="hard", zeta=1.0, predictor="hindsight",
                            check_decisions=False)
        traj = run_episode(cfg, inst, constant_arrivals([1.0], [[2.0]], 10))
        cset = inst.make_consumption_set()
        cum = np.zeros(1)
        for t in range(traj.n_rounds):
            cum += traj.consumptions[t]
            inside = cset.contains(cum / traj.horizon)
            assert inside == (t + 1 < traj.tau)

    def test_soft_mode_runs_all_rounds(self):
        inst = self.make_instance()
        cfg = EpisodeConfig(horizon=10, mode="soft", zeta=1.0, predictor="hindsight",
                            check_decisions=False)
        traj = run_episode(cfg, inst, constant_arrivals([1.0], [[2.0]], 10))
        assert traj.tau == 10 and traj.n_rounds == 10

    def test_exhausted_stream_rejected(self):
        inst = self.make_instance()
        cfg = EpisodeConfig(horizon=10, mode="soft", zeta=1.0, predictor="hindsight",
                            check_decisions=False)
        with pytest.raises(ConfigurationError):
            run_episode(cfg, inst, constant_arrivals([1.0], [[2.0]], 4))

    def test_one_step_degenerate_run(self):
        inst = make_knapsack_instance(p=2, d=3, m=1, deg=1, noise_halfwidth=0.0,
                                      k=3, b=[100.0], seed=1)
        cfg = EpisodeConfig(horizon=1, mode="hard", zeta=1.0, predictor="hindsight")
        rng = instance_rng(1, 0, 0)
        arrival = inst.sample_arrival(rng)
        traj = run_episode(cfg, inst, iter([arrival]))
        oracle = inst.make_oracle()
        w = oracle.solve(arrival.r)  # duals start at zero
        assert np.array_equal(traj.decisions[0], w)
        utility = inst.make_utility()
        assert compute_objective(traj, "hard", utility) == arrival.r @ w


class TestComputeObjective:
    def make_traj(self, rewards, consumptions, T, mode="soft"):
        n = len(rewards)
        return Trajectory(
            horizon=T, mode=mode, zeta=1.0,
            decisions=np.zeros((n, 1)),
            rewards=np.array(rewards, float),
            consumptions=np.array(consumptions, float),
            lambdas=np.zeros((n, 1)),
            thetas=np.zeros((n, 1)),
            step_wall_ms=np.zeros(n),
            tau=n if n < T else T,
            dual_state=None,
        )

    def test_unit_rewards_zero_utility(self):
        traj = self.make_traj([1, 1, 1, 1], [[0]] * 4, T=4)
        assert compute_objective(traj, "soft", ZeroUtility(1)) == 1.0

    def test_hard_without_stop_equals_soft(self):
        traj = self.make_traj([1, 2, 3], [[0.1], [0.2], [0.3]], T=3)
        u = ZeroUtility(1)
        assert compute_objective(traj, "hard", u) == compute_objective(traj, "soft", u)

    def test_leftover_value_utility_evaluation(self):
        # value of consumption up to the cap: u([0.25]) = 0.25 with y = b = 1
        traj = self.make_traj([0.0, 0.0], [[0.25], [0.25]], T=2)
        u = LeftoverValueUtility([1.0], [1.0])
        assert compute_objective(traj, "soft", u) == 0.25

    def test_truncated_sums_still_divide_by_T(self):
        traj = self.make_traj([5.0, 5.0], [[1.0], [1.0]], T=10)  # stopped at 2
        assert compute_objective(traj, "hard", ZeroUtility(1)) == 1.0


class TestRelativeRegret:
    def test_equal_objectives(self):
        assert relative_regret(10.0, 10.0) == 0.0

    def test_fraction(self):
        assert relative_regret(8.0, 10.0) == pytest.approx(0.2)

    def test_zero_objective(self):
        assert relative_regret(0.0, 5.0) == 1.0

    def test_undefined_for_nonpositive_reference(self):
        assert relative_regret(1.0, 0.0) is None
        assert relative_regret(1.0, -2.0) is None
        assert relative_regret(1.0, None) is None


class TestRunTrials:
    def test_single_trial_summary_matches_row(self):
        inst = make_knapsack_instance(seed=2)
        cfg = EpisodeConfig(horizon=40, predictor="saa", zeta=1.0)
        rows, summary = run_trials(cfg, inst, 1)
        assert len(rows) == 1
        assert summary["obj"]["mean"] == rows[0].obj
        assert summary["obj"]["std"] == 0.0

    def test_deterministic_across_runs(self):
        inst = make_knapsack_instance(seed=3)
        cfg = EpisodeConfig(horizon=60, predictor="linear", loss=LossKind.SPO_PLUS,
                            zeta=2.0, seed=11, train_steps=10)
        rows1, _ = run_trials(cfg, inst, 2)
        rows2, _ = run_trials(cfg, inst, 2)
        for a, b in zip(rows1, rows2):
            assert a.obj == b.obj
            assert a.tau == b.tau
            assert a.rel_regret == b.rel_regret

    def test_parallel_matches_serial(self):
        inst = make_knapsack_instance(seed=4)
        cfg = EpisodeConfig(horizon=40, predictor="saa", zeta=1.0, seed=5)
        serial, _ = run_trials(cfg, inst, 3, workers=1)
        parallel, _ = run_trials(cfg, inst, 3, workers=2)
        for a, b in zip(serial, parallel):
            assert a.obj == b.obj and a.tau == b.tau

    def test_hindsight_regret_is_zero(self):
        inst = make_knapsack_instance(seed=5)
        cfg = EpisodeConfig(horizon=50, predictor="hindsight", zeta=1.0)
        rows, _ = run_trials(cfg, inst, 3)
        assert all(r.rel_regret == 0.0 for r in rows)

    def test_bad_trial_count(self):
        inst = make_knapsack_instance(seed=5)
        cfg = EpisodeConfig(horizon=10, predictor="saa", zeta=1.0)
        with pytest.raises(ConfigurationError):
            run_trials(cfg, inst, 0)


class TestEpisodeInvariants:
    def test_decisions_are_vertices_and_duals_feasible(self):
        inst = make_longest_path_instance(n=3, seed=6)
        cfg = EpisodeConfig(horizon=80, mode="soft", predictor="linear",
                            loss=LossKind.LS_COST, train_steps=5, seed=1)
        rng = instance_rng(1, 0, 0)
        arrivals = [inst.sample_arrival(rng) for _ in range(80)]
        traj = run_episode(cfg, inst, iter(arrivals))
        oracle = inst.make_oracle()
        utility = inst.make_utility()
        cset = inst.make_consumption_set()
        for t in range(traj.n_rounds):
            assert oracle.is_feasible_vertex(traj.decisions[t])
            assert utility.contains_lambda(traj.lambdas[t])
            assert cset.contains_theta(traj.thetas[t])

    def test_cumulative_consumption_recomputable(self):
        inst = make_knapsack_instance(seed=7)
        cfg = EpisodeConfig(horizon=50, predictor="true", zeta=1.5, seed=2)
        rng = instance_rng(2, 0, 0)
        arrivals = [inst.sample_arrival(rng) for _ in range(50)]
        traj = run_episode(cfg, inst, iter(arrivals))
        recomputed = np.zeros(inst.m)
        for t in range(traj.n_rounds):
            recomputed = recomputed + traj.consumptions[t]
        assert np.array_equal(recomputed, traj.consumption_sum)

    def test_huge_budget_never_stops(self):
        inst = make_knapsack_instance(b=[1e9, 1e9, 1e9], seed=8)
        cfg = EpisodeConfig(horizon=30, mode="hard", predictor="hindsight", zeta=1.0)
        rows, _ = run_trials(cfg, inst, 2)
        assert all(r.tau == 30 for r in rows)

    def test_hard_mode_requires_zero_feasible(self):
        inst = make_longest_path_instance(n=2, seed=9)
        bad = UpperBoxSet(np.full(4, 0.5))
        assert bad.contains(np.zeros(4))  # sanity: 0 <= b is feasible for boxes

    def test_spo_diagnostics_on_schedule_steps_only(self):
        inst = make_knapsack_instance(seed=10)
        cfg = EpisodeConfig(horizon=40, predictor="linear", loss=LossKind.SPO_PLUS,
                            zeta=1.0, schedule=PeriodicSchedule(10), train_steps=2, seed=3)
        rng = instance_rng(3, 0, 0)
        arrivals = [inst.sample_arrival(rng) for _ in range(40)]
        traj = run_episode(cfg, inst, iter(arrivals))
        steps = [t for (t, _) in traj.spo_diagnostics]
        assert set(steps) <= {10, 20, 30, 40}
        assert all(val >= -1e-12 for (_, val) in traj.spo_diagnostics)


class TestBenchmarkOrdering:
    def test_hindsight_dominates_true_dominates_saa(self):
        inst = make_knapsack_instance(seed=11)
        T, trials = 150, 20
        means = {}
        for pred in ("hindsight", "true", "saa"):
            cfg = EpisodeConfig(horizon=T, predictor=pred, seed=13)
            rows, summary = run_trials(cfg, inst, trials, workers=2)
            means[pred] = summary["obj"]["mean"]
        assert means["hindsight"] >= means["true"] >= means["saa"]
