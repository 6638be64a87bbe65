"""Synthetic instances and their arrival distributions.

An instance fixes a 0/1 weight matrix ``W`` and produces arrivals by

    x ~ N(0, I_p)
    vec(r, V)_j = (1 + (1 + W_j @ x / sqrt(p)) ** deg) * eps_j,
    eps_j ~ Uniform[1 - noise, 1 + noise]  (independent, multiplicative)

where ``vec`` is the flat layout of ``core.vec_pair`` and ``W_j`` is row j
of ``W``.  Grid-path instances generate rewards only; their consumption
matrix is structurally the identity.  Since the noise has unit mean, the
conditional mean of ``vec(r, V)`` given x drops the eps factor, which is
what the true-model reference predictor uses.

Randomness: all draws come from the counter-based Philox generator keyed
by ``numpy.random.SeedSequence``.  The instance seed keys the weight
matrix (spawn key (0,)) and the budget-calibration sample (spawn key
(1,)); arrival streams are driven by generators passed in by the caller,
and for a given generator the draw order per arrival is the p feature
normals followed by the noise uniforms.  This makes every stream
reproducible across platforms and runs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import Arrival, ConfigurationError, Prediction, unvec_pair
from .duals import (
    ConsumptionSet,
    SeparableQuadraticUtility,
    UpperBoxSet,
    UtilityModel,
    ZeroUtility,
)
from .oracles import FeasibleRegionOracle, GridPathRegion, KnapsackRegion

KNAPSACK = "knapsack"
GRID_PATH = "grid_path"


def instance_rng(seed: int, *key: int) -> np.random.Generator:
    """Philox generator for a seed and purpose key, stable across platforms."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def sample_weight_matrix(rows: int, p: int, rng: np.random.Generator) -> np.ndarray:
    """Fair-coin 0/1 matrix with independent entries."""
    if rows < 0 or p < 1:
        raise ConfigurationError(f"invalid weight matrix shape ({rows}, {p})")
    return rng.integers(0, 2, size=(rows, p)).astype(float)


@dataclass(frozen=True)
class SyntheticInstance:
    """A fixed data-generating process plus the decision problem built on it."""

    family: str
    p: int
    d: int
    m: int
    deg: int
    noise_halfwidth: float
    W: np.ndarray
    seed: int
    # knapsack family
    k: int | None = None
    b: np.ndarray | None = None
    # grid family
    n_side: int | None = None
    v_cap: float | None = None
    default_horizon: int = 1000

    @property
    def identity_consumption(self) -> bool:
        return self.family == GRID_PATH

    def make_oracle(self) -> FeasibleRegionOracle:
        if self.family == KNAPSACK:
            return KnapsackRegion(self.d, self.k)
        return GridPathRegion(self.n_side)

    def make_utility(self) -> UtilityModel:
        if self.family == KNAPSACK:
            return ZeroUtility(self.m)
        return SeparableQuadraticUtility(self.m)

    def make_consumption_set(self) -> ConsumptionSet:
        if self.family == KNAPSACK:
            return UpperBoxSet(self.b)
        return UpperBoxSet(np.full(self.m, self.v_cap))

    def default_mode(self) -> str:
        return "hard" if self.family == KNAPSACK else "soft"

    def _mean_vec(self, x: np.ndarray) -> np.ndarray:
        z = 1.0 + (self.W @ x) / np.sqrt(self.p)
        return 1.0 + z ** self.deg

    def sample_arrival(self, rng: np.random.Generator) -> Arrival:
        x = rng.standard_normal(self.p)
        base = self._mean_vec(x)
        if self.noise_halfwidth > 0.0:
            eps = rng.uniform(1.0 - self.noise_halfwidth, 1.0 + self.noise_halfwidth,
                              size=base.shape)
            vec = base * eps
        else:
            vec = base
        if self.identity_consumption:
            return Arrival(x, vec, np.eye(self.d))
        r, V = unvec_pair(vec, self.d, self.m)
        return Arrival(x, r, V)

    def conditional_mean(self, x: np.ndarray) -> Prediction:
        x = np.asarray(x, dtype=float)
        vec = self._mean_vec(x)
        if self.identity_consumption:
            return Prediction(vec, np.eye(self.d))
        r, V = unvec_pair(vec, self.d, self.m)
        return Prediction(r, V)

    def arrival_stream(self, rng: np.random.Generator, count: int):
        for _ in range(count):
            yield self.sample_arrival(rng)


def sample_arrival(instance: SyntheticInstance, rng: np.random.Generator) -> Arrival:
    return instance.sample_arrival(rng)


def conditional_mean(instance: SyntheticInstance, x: np.ndarray) -> Prediction:
    return instance.conditional_mean(x)


def _calibrate_knapsack_budget(inst: SyntheticInstance, overshoot: float = 1.5,
                               n_warmup: int = 1000) -> np.ndarray:
    """Budget such that the budget-blind greedy overconsumes it ~overshoot-fold.

    Averages the consumption of the reward-only top-k decision over a warmup
    sample drawn from the instance seed, then divides by the overshoot factor
    so the constraint binds without being hopeless.
    """
    oracle = KnapsackRegion(inst.d, inst.k)
    rng = instance_rng(inst.seed, 1)
    total = np.zeros(inst.m)
    for _ in range(n_warmup):
        arrival = inst.sample_arrival(rng)
        w = oracle.solve(arrival.r)
        total += arrival.V.T @ w
    return total / n_warmup / overshoot


def make_knapsack_instance(
    p: int = 5,
    d: int = 10,
    m: int = 3,
    deg: int = 6,
    noise_halfwidth: float = 0.5,
    k: int = 3,
    b: np.ndarray | None = None,
    budget_overshoot: float = 1.5,
    seed: int = 0,
) -> SyntheticInstance:
    """Order-acceptance instance: pick at most k of d orders per round.

    When b is omitted it is calibrated from a 1000-arrival warmup so that
    ignoring the budget would overconsume it ~1.5x on average.
    """
    if not (0.0 <= noise_halfwidth < 1.0):
        raise ConfigurationError(f"noise halfwidth must be in [0, 1), got {noise_halfwidth}")
    if deg < 1:
        raise ConfigurationError(f"degree must be >= 1, got {deg}")
    W = sample_weight_matrix(d * (m + 1), p, instance_rng(seed, 0))
    inst = SyntheticInstance(
        family=KNAPSACK, p=p, d=d, m=m, deg=deg, noise_halfwidth=noise_halfwidth,
        W=W, seed=seed, k=k, b=None, default_horizon=1000,
    )
    if b is None:
        b = _calibrate_knapsack_budget(inst, overshoot=budget_overshoot)
    else:
        b = np.asarray(b, dtype=float)
        if b.shape != (m,):
            raise ConfigurationError(f"budget shape {b.shape}, expected ({m},)")
    return replace(inst, b=b)


def make_longest_path_instance(
    p: int = 5,
    n: int = 4,
    deg: int = 6,
    noise_halfwidth: float = 0.5,
    v_cap: float = 0.6,
    seed: int = 0,
) -> SyntheticInstance:
    """Grid routing instance: monotone paths with per-edge usage caps.

    Consumption equals the decision itself (d = m = edge count), so only the
    reward vector is generated and learned.
    """
    if not (0.0 <= noise_halfwidth < 1.0):
        raise ConfigurationError(f"noise halfwidth must be in [0, 1), got {noise_halfwidth}")
    if deg < 1:
        raise ConfigurationError(f"degree must be >= 1, got {deg}")
    if v_cap <= 0:
        raise ConfigurationError(f"edge cap must be positive, got {v_cap}")
    d = 2 * n * (n - 1)
    W = sample_weight_matrix(d, p, instance_rng(seed, 0))
    return SyntheticInstance(
        family=GRID_PATH, p=p, d=d, m=d, deg=deg, noise_halfwidth=noise_halfwidth,
        W=W, seed=seed, n_side=n, v_cap=v_cap, default_horizon=1000,
    )


def make_instance(family: str, **overrides) -> SyntheticInstance:
    if family == KNAPSACK:
        return make_knapsack_instance(**overrides)
    if family == GRID_PATH:
        return make_longest_path_instance(**overrides)
    raise ConfigurationError(f"unknown instance family: {family!r}")


def save_arrival_stream(path, instance: SyntheticInstance, arrivals) -> None:
    """Write arrivals as text for replay: a dims header, then one row each.

    Row layout: the p feature values, the d rewards, then the d*m
    consumption entries column-stacked (omitted for identity-consumption
    families).  Floats are written with repr so they round-trip exactly.
    """
    with open(path, "w") as fh:
        fh.write("ocdm-stream 1\n")
        fh.write(f"{instance.family} {instance.p} {instance.d} {instance.m}\n")
        for a in arrivals:
            parts = [repr(float(v)) for v in a.x]
            parts += [repr(float(v)) for v in a.r]
            if not instance.identity_consumption:
                parts += [repr(float(v)) for v in a.V.ravel(order="F")]
            fh.write(" ".join(parts) + "\n")


def load_arrival_stream(path) -> tuple[dict, list[Arrival]]:
    with open(path) as fh:
        magic = fh.readline().split()
        if magic[:1] != ["ocdm-stream"]:
            raise ConfigurationError(f"not an arrival stream file: {path}")
        family, p, d, m = fh.readline().split()
        p, d, m = int(p), int(d), int(m)
        identity = family == GRID_PATH
        arrivals = []
        for line in fh:
            vals = np.array([float(v) for v in line.split()])
            x, rest = vals[:p], vals[p:]
            if identity:
                arrivals.append(Arrival(x, rest, np.eye(d)))
            else:
                r, V = unvec_pair(rest, d, m)
                arrivals.append(Arrival(x, r, V))
    return {"family": family, "p": p, "d": d, "m": m}, arrivals
