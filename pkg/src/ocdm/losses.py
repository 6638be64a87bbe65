"""Decision losses over dual-adjusted cost vectors.

The decision regret ("true" loss) of predicting cost c_hat when the
realized cost is c, for a maximization oracle w*, is

    regret(c_hat, c) = c @ (w*(c) - w*(c_hat)) >= 0.

Its convex surrogate that consults the decision region is, in
maximization form,

    surrogate(c_hat, c) = max_w {(2 c_hat - c) @ w} - 2 c_hat @ w*(c) + c @ w*(c),

which is zero at c_hat = c and dominates the regret; a subgradient in
c_hat is 2 (w*(2 c_hat - c) - w*(c)).  The two least-squares baselines
measure plain prediction error, either of the cost vector or of the raw
(reward, consumption) pair.

``*_batch`` variants apply the same formulas row-wise and exist for the
full-batch training loop.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .core import Arrival, CostVector, DualPair, Prediction, decision_cost, reward_and_consumption
from .oracles import FeasibleRegionOracle


class LossKind(Enum):
    """Trainable surrogate losses (the true decision regret is evaluation-only)."""

    SPO_PLUS = "spo_plus"
    LS_COST = "ls_cost"
    LS_PRED = "ls_pred"


def _cost(c) -> np.ndarray:
    return c.c if isinstance(c, CostVector) else np.asarray(c, dtype=float)


def spo_loss(
    mu_hat: Prediction | Arrival,
    mu: Arrival | Prediction,
    omega: DualPair,
    zeta: float,
    oracle: FeasibleRegionOracle,
) -> float:
    """Realized-cost gap between the oracle decisions for mu and for mu_hat."""
    c = decision_cost(mu, omega, zeta).c
    c_hat = decision_cost(mu_hat, omega, zeta).c
    return float(c @ (oracle.solve(c) - oracle.solve(c_hat)))


def spo_plus_loss(c_hat, c, oracle: FeasibleRegionOracle) -> float:
    c_hat, c = _cost(c_hat), _cost(c)
    w_q = oracle.solve(2.0 * c_hat - c)
    w_c = oracle.solve(c)
    return float((2.0 * c_hat - c) @ w_q - 2.0 * c_hat @ w_c + c @ w_c)


def spo_plus_subgrad_cost(c_hat, c, oracle: FeasibleRegionOracle) -> np.ndarray:
    c_hat, c = _cost(c_hat), _cost(c)
    return 2.0 * (oracle.solve(2.0 * c_hat - c) - oracle.solve(c))


def spo_plus_subgrad_cost_batch(
    c_hat: np.ndarray,
    c: np.ndarray,
    oracle: FeasibleRegionOracle,
    w_c: np.ndarray | None = None,
) -> np.ndarray:
    """Row-wise surrogate subgradients; pass cached w*(c) rows to skip re-solving."""
    if w_c is None:
        w_c = oracle.solve_batch(c)
    return 2.0 * (oracle.solve_batch(2.0 * c_hat - c) - w_c)


def ls_cost_loss(c_hat, c) -> float:
    diff = _cost(c_hat) - _cost(c)
    return float(diff @ diff)


def ls_cost_grad(c_hat, c) -> np.ndarray:
    return 2.0 * (_cost(c_hat) - _cost(c))


def ls_pred_loss(mu_hat: Prediction | Arrival, mu: Arrival | Prediction) -> float:
    r_hat, V_hat = reward_and_consumption(mu_hat)
    r, V = reward_and_consumption(mu)
    return float(np.sum((r_hat - r) ** 2) + np.sum((V_hat - V) ** 2))


def ls_pred_grad(mu_hat, mu) -> tuple[np.ndarray, np.ndarray]:
    r_hat, V_hat = reward_and_consumption(mu_hat)
    r, V = reward_and_consumption(mu)
    return 2.0 * (r_hat - r), 2.0 * (V_hat - V)


def cost_grad_to_prediction_grad(
    g_c: np.ndarray, omega: DualPair, zeta: float
) -> tuple[np.ndarray, np.ndarray]:
    """Chain a cost-space gradient through c_hat = r_hat - V_hat (lam + zeta theta)."""
    g_c = np.asarray(g_c, dtype=float)
    alpha = omega.lam + zeta * omega.theta
    return g_c.copy(), -np.outer(g_c, alpha)
