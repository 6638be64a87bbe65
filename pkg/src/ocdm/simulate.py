"""Episode loop, update schedules, objective metrics, and the trial runner.

One episode processes T arrivals.  Each round: predict (reward,
consumption) from the context, maximize the dual-adjusted cost over the
decision region, observe the realization, then, on schedule rounds only,
take one mirror-descent step on each dual and refit the prediction model
on the full history against the freshly updated duals.

Constraint handling comes in two modes.  In "hard" mode the episode stops
at the first round where the (1/T)-scaled cumulative consumption leaves
the feasible set; the stopping round itself is recorded.  In "soft" mode
the episode always runs all T rounds and the distance of the averaged
consumption from the feasible set is reported as the infeasibility metric.

Objectives are averaged with 1/T in both modes (hard-mode sums are
truncated at the stopping round but still divided by T).
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Arrival, ConfigurationError, DualPair, Prediction, decision_cost
from .datagen import SyntheticInstance, instance_rng
from .duals import (
    DualState,
    initial_duals,
    lemma1_step_sizes,
    power_schedule_step_size,
)
from .losses import LossKind
from .models import (
    LinearModel,
    MlpModel,
    TrainingBuffer,
    fit_erm,
    forward,
    make_adam_state,
)

MODEL_PREDICTORS = ("linear", "mlp")
BENCHMARK_PREDICTORS = ("saa", "true", "hindsight")


@dataclass(frozen=True)
class PeriodicSchedule:
    """Update duals and model every `period` rounds."""

    period: int

    def __post_init__(self):
        if self.period < 1:
            raise ConfigurationError(f"period must be >= 1, got {self.period}")


@dataclass(frozen=True)
class PowerSchedule:
    """Update at rounds floor(k ** beta), k = 1, 2, ...; beta >= 1 thins updates."""

    beta: float

    def __post_init__(self):
        if self.beta < 1.0:
            raise ConfigurationError(f"beta must be >= 1, got {self.beta}")


Schedule = PeriodicSchedule | PowerSchedule


def update_schedule(schedule: Schedule, T: int) -> list[int]:
    """Sorted update rounds within [1, T]."""
    if T < 1:
        raise ConfigurationError(f"horizon must be >= 1, got {T}")
    if isinstance(schedule, PeriodicSchedule):
        return list(range(schedule.period, T + 1, schedule.period))
    steps = set()
    k = 1
    while True:
        t = math.floor(k ** schedule.beta)
        if t > T:
            break
        steps.add(t)
        k += 1
    return sorted(steps)


@dataclass(frozen=True)
class EpisodeConfig:
    horizon: int
    mode: str = "hard"  # "hard" | "soft"
    zeta: float | None = None  # None: calibrated as hindsight-estimate / boundary radius
    schedule: Schedule = PeriodicSchedule(10)
    loss: LossKind = LossKind.SPO_PLUS
    predictor: str = "linear"  # "linear" | "mlp" | "saa" | "true" | "hindsight"
    train_steps: int = 50
    learning_rate: float | None = None
    eta_lambda: float | None = None
    eta_theta: float | None = None
    dv_bound: float | None = None
    seed: int = 0
    check_decisions: bool = True

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigurationError(f"horizon must be >= 1, got {self.horizon}")
        if self.mode not in ("hard", "soft"):
            raise ConfigurationError(f"mode must be 'hard' or 'soft', got {self.mode!r}")
        if self.zeta is not None and self.zeta <= 0:
            raise ConfigurationError(f"zeta must be positive, got {self.zeta}")
        if self.predictor not in MODEL_PREDICTORS + BENCHMARK_PREDICTORS:
            raise ConfigurationError(f"unknown predictor {self.predictor!r}")
        if self.train_steps < 0:
            raise ConfigurationError("train_steps must be >= 0")


@dataclass
class Trajectory:
    """Per-round records of one episode, truncated at the stopping round."""

    horizon: int
    mode: str
    zeta: float
    decisions: np.ndarray  # (n, d)
    rewards: np.ndarray  # (n,), realized r_t @ w_t
    consumptions: np.ndarray  # (n, m)
    lambdas: np.ndarray  # (n, m), dual used at decision time
    thetas: np.ndarray  # (n, m)
    step_wall_ms: np.ndarray  # (n,)
    tau: int
    dual_state: DualState
    spo_diagnostics: list[tuple[int, float]] = field(default_factory=list)

    @property
    def n_rounds(self) -> int:
        return self.rewards.shape[0]

    @property
    def reward_sum(self) -> float:
        return float(self.rewards.sum())

    @property
    def consumption_sum(self) -> np.ndarray:
        return self.consumptions.sum(axis=0)

    @property
    def v_avg(self) -> np.ndarray:
        """(1/T)-scaled cumulative consumption (truncated sums in hard mode)."""
        return self.consumption_sum / self.horizon

    @property
    def dv_measured(self) -> float:
        if self.n_rounds == 0:
            return 0.0
        return float(np.max(np.linalg.norm(self.consumptions, axis=1)))


def estimate_consumption_bound(instance: SyntheticInstance, n_warmup: int = 256,
                               quantile: float = 0.95) -> float:
    """Measured per-round consumption scale over a warmup sample.

    Measures the decisions the algorithm starts from (reward-greedy, zero
    duals) and takes a high quantile of the consumption norms rather than
    the maximum, which a single tail draw would dominate on heavy-tailed
    instances.  Feeds the default dual step sizes; override with
    EpisodeConfig.dv_bound when an exact bound is known.
    """
    oracle = instance.make_oracle()
    rng = instance_rng(instance.seed, 2)
    norms = np.empty(n_warmup)
    for i in range(n_warmup):
        arrival = instance.sample_arrival(rng)
        w = oracle.solve(arrival.r)
        norms[i] = np.linalg.norm(arrival.V.T @ w)
    return float(np.quantile(norms, quantile))


def resolve_zeta(instance: SyntheticInstance, n_warmup: int = 256) -> float:
    """Default budget penalty: warmup hindsight value over the boundary radius."""
    oracle = instance.make_oracle()
    cset = instance.make_consumption_set()
    rng = instance_rng(instance.seed, 3)
    total = 0.0
    for _ in range(n_warmup):
        arrival = instance.sample_arrival(rng)
        total += float(arrival.r @ oracle.solve(arrival.r))
    obj_star_est = total / n_warmup
    return max(obj_star_est / cset.boundary_radius, 1e-6)


def _default_step_sizes(schedule: Schedule, T: int, D: float, G: float) -> float:
    if D <= 0.0 or G <= 0.0:
        return 0.0
    if isinstance(schedule, PowerSchedule):
        return power_schedule_step_size(D, G, T, schedule.beta)
    if schedule.period == 1:
        return lemma1_step_sizes(D, G, T)
    # Sparse updates leave each iterate in place for `period` rounds; the
    # stretched horizon keeps the step conservative enough for the same bound.
    return lemma1_step_sizes(D, G, T * schedule.period)


def _make_model(config: EpisodeConfig, instance: SyntheticInstance, trial: int):
    rng = instance_rng(config.seed, trial, 1)
    cls = LinearModel if config.predictor == "linear" else MlpModel
    return cls(instance.p, instance.d, instance.m, rng,
               identity_consumption=instance.identity_consumption)


def run_episode(
    config: EpisodeConfig,
    instance: SyntheticInstance,
    arrivals,
    trial: int = 0,
) -> Trajectory:
    """Run one episode over the given arrival stream (must yield >= T arrivals)."""
    T = config.horizon
    oracle = instance.make_oracle()
    utility = instance.make_utility()
    cset = instance.make_consumption_set()
    d, m = instance.d, instance.m

    if config.mode == "hard" and not cset.contains(np.zeros(m)):
        raise ConfigurationError("hard mode requires the zero consumption vector feasible")
    zeta = config.zeta if config.zeta is not None else resolve_zeta(instance)

    dv = config.dv_bound if config.dv_bound is not None else estimate_consumption_bound(instance)
    D_lam = utility.bregman_diameter_bound()
    D_th = cset.bregman_diameter_bound()
    G_lam = utility.conj_subgrad_norm_bound() + dv
    G_th = cset.conj_subgrad_norm_bound() + dv
    eta_lam = config.eta_lambda if config.eta_lambda is not None \
        else _default_step_sizes(config.schedule, T, D_lam, G_lam)
    eta_th = config.eta_theta if config.eta_theta is not None \
        else _default_step_sizes(config.schedule, T, D_th, G_th)
    lam0, th0 = initial_duals(utility, cset)
    dual = DualState(lam0, th0, eta_lam, eta_th, D_lam, D_th, G_lam, G_th)

    model = None
    buffer = None
    adam = None
    if config.predictor in MODEL_PREDICTORS:
        model = _make_model(config, instance, trial)
        buffer = TrainingBuffer(instance.p, d, m, instance.identity_consumption)
        adam = make_adam_state(model, config.learning_rate)
    saa_r = np.zeros(d)
    saa_V = np.zeros((d, m))
    n_seen = 0

    update_steps = set(update_schedule(config.schedule, T))
    decisions = np.empty((T, d))
    rewards = np.empty(T)
    consumptions = np.empty((T, m))
    lambdas = np.empty((T, m))
    thetas = np.empty((T, m))
    step_wall = np.empty(T)
    spo_diag: list[tuple[int, float]] = []

    cum_v = np.zeros(m)
    tau = T
    n_rec = 0
    stream = iter(arrivals)
    for t in range(1, T + 1):
        tic = time.perf_counter()
        try:
            arrival = next(stream)
        except StopIteration:
            raise ConfigurationError(f"arrival stream exhausted at round {t} of {T}")

        if model is not None:
            pred = forward(model, arrival.x)
        elif config.predictor == "true":
            pred = instance.conditional_mean(arrival.x)
        elif config.predictor == "hindsight":
            pred = Prediction(arrival.r, arrival.V)
        else:  # saa
            if n_seen == 0:
                pred = Prediction(np.zeros(d), np.zeros((d, m)))
            else:
                pred = Prediction(saa_r / n_seen, saa_V / n_seen)

        omega = DualPair(dual.lam, dual.theta)
        c_hat = decision_cost(pred, omega, zeta).c
        w = oracle.solve(c_hat)
        if config.check_decisions and not oracle.is_feasible_vertex(w):
            raise AssertionError(f"oracle returned a non-vertex decision at round {t}")
        v = arrival.V.T @ w

        decisions[n_rec] = w
        rewards[n_rec] = arrival.r @ w
        consumptions[n_rec] = v
        lambdas[n_rec] = dual.lam
        thetas[n_rec] = dual.theta
        n_rec += 1

        dual.accumulate(v, utility, cset)
        if model is not None:
            buffer.append(arrival)
        if config.predictor == "saa":
            saa_r += arrival.r
            saa_V += arrival.V
            n_seen += 1
        cum_v += v

        if config.mode == "hard" and not cset.contains(cum_v / T):
            tau = t
            step_wall[n_rec - 1] = (time.perf_counter() - tic) * 1e3
            break

        if t in update_steps:
            if model is not None:
                c_true = decision_cost(arrival, omega, zeta).c
                spo_diag.append((t, float(c_true @ (oracle.solve(c_true) - w))))
            dual.update(v, utility, cset)
            if model is not None:
                omega_next = DualPair(dual.lam, dual.theta)
                fit_erm(model, buffer, omega_next, zeta, config.loss,
                        config.train_steps, oracle=oracle, adam=adam)
        step_wall[n_rec - 1] = (time.perf_counter() - tic) * 1e3

    return Trajectory(
        horizon=T,
        mode=config.mode,
        zeta=zeta,
        decisions=decisions[:n_rec].copy(),
        rewards=rewards[:n_rec].copy(),
        consumptions=consumptions[:n_rec].copy(),
        lambdas=lambdas[:n_rec].copy(),
        thetas=thetas[:n_rec].copy(),
        step_wall_ms=step_wall[:n_rec].copy(),
        tau=tau,
        dual_state=dual,
        spo_diagnostics=spo_diag,
    )


def compute_objective(traj: Trajectory, mode: str, utility) -> float:
    """Average reward plus utility of average consumption, both 1/T-scaled."""
    return traj.reward_sum / traj.horizon + utility.value(traj.v_avg)


def relative_regret(obj: float, obj_hindsight: float | None) -> float | None:
    """Fraction of the hindsight objective forfeited; None when undefined."""
    if obj_hindsight is None or obj_hindsight <= 0.0:
        return None
    return 1.0 - obj / obj_hindsight


@dataclass
class Metrics:
    trial: int
    tau: int
    obj: float
    obj_hindsight: float | None
    rel_regret: float | None
    infeasibility: float
    dv_measured: float
    regret_lambda_acc: float
    regret_theta_acc: float
    kappa_md: float
    wall_ms: float


def episode_metrics(
    traj: Trajectory,
    traj_hindsight: Trajectory | None,
    instance: SyntheticInstance,
    trial: int,
) -> Metrics:
    utility = instance.make_utility()
    cset = instance.make_consumption_set()
    obj = compute_objective(traj, traj.mode, utility)
    obj_h = None
    if traj_hindsight is not None:
        obj_h = compute_objective(traj_hindsight, traj_hindsight.mode, utility)
    dual = traj.dual_state
    kappa_md = traj.dv_measured * (
        traj.zeta * math.sqrt(dual.D_theta) + math.sqrt(dual.D_lambda)
    )
    return Metrics(
        trial=trial,
        tau=traj.tau,
        obj=obj,
        obj_hindsight=obj_h,
        rel_regret=relative_regret(obj, obj_h),
        infeasibility=cset.dist(traj.v_avg),
        dv_measured=traj.dv_measured,
        regret_lambda_acc=dual.xi_acc,
        regret_theta_acc=dual.phi_acc,
        kappa_md=kappa_md,
        wall_ms=float(traj.step_wall_ms.sum()),
    )


def run_single_trial(
    config: EpisodeConfig, instance: SyntheticInstance, trial: int
) -> Metrics:
    """One seeded trial: the configured arm and its paired hindsight reference."""
    rng = instance_rng(config.seed, trial, 0)
    arrivals = [instance.sample_arrival(rng) for _ in range(config.horizon)]
    traj = run_episode(config, instance, iter(arrivals), trial=trial)
    if config.predictor == "hindsight":
        traj_h = traj
    else:
        hind_cfg = replace(config, predictor="hindsight")
        traj_h = run_episode(hind_cfg, instance, iter(arrivals), trial=trial)
    return episode_metrics(traj, traj_h, instance, trial)


def _trial_job(args) -> Metrics:
    config, instance, trial = args
    return run_single_trial(config, instance, trial)


def run_trials(
    config: EpisodeConfig,
    instance: SyntheticInstance,
    n_trials: int,
    workers: int | None = None,
) -> tuple[list[Metrics], dict]:
    """Independent seeded trials plus mean/std summaries.

    Trials are embarrassingly parallel; results are sorted by trial index so
    parallel and serial runs produce identical output.
    """
    if n_trials < 1:
        raise ConfigurationError(f"n_trials must be >= 1, got {n_trials}")
    if workers is None:
        workers = 1
    jobs = [(config, instance, trial) for trial in range(n_trials)]
    if workers > 1 and n_trials > 1:
        with ProcessPoolExecutor(max_workers=min(workers, n_trials)) as pool:
            rows = list(pool.map(_trial_job, jobs))
    else:
        rows = [_trial_job(job) for job in jobs]
    rows.sort(key=lambda metric: metric.trial)
    return rows, summarize(rows)


def summarize(rows: list[Metrics]) -> dict:
    def stats(values):
        values = [v for v in values if v is not None]
        if not values:
            return {"mean": None, "std": None, "n": 0}
        arr = np.array(values, dtype=float)
        return {"mean": float(arr.mean()),
                "std": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
                "n": int(arr.size)}

    return {
        "obj": stats([r.obj for r in rows]),
        "obj_hindsight": stats([r.obj_hindsight for r in rows]),
        "rel_regret": stats([r.rel_regret for r in rows]),
        "infeasibility": stats([r.infeasibility for r in rows]),
        "tau": stats([float(r.tau) for r in rows]),
    }


def default_workers() -> int:
    env = os.environ.get("OCDM_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigurationError(f"OCDM_WORKERS must be an integer, got {env!r}")
    return os.cpu_count() or 1
