"""Shared domain types and the dual-adjusted cost vector.

Conventions used throughout the package:

* feature vectors ``x`` have length ``p``, reward vectors ``r`` length ``d``,
  consumption matrices ``V`` shape ``(d, m)``; the per-round consumption of a
  decision ``w`` is ``V.T @ w`` (length ``m``).
* the flat layout of a (reward, consumption) pair is ``vec(r, V)``: the ``d``
  reward entries first, then the ``d * m`` entries of ``V`` column-stacked
  (Fortran order).  Data generation, prediction models, and losses all rely
  on this layout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ConfigurationError(ValueError):
    """Raised when dimensions or configuration values are inconsistent."""


def _as_finite_array(value, name: str, ndim: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim != ndim:
        raise ConfigurationError(f"{name} must have {ndim} dimension(s), got {arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class Arrival:
    """One observed draw: a feature vector with its realized reward and consumption."""

    x: np.ndarray
    r: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _as_finite_array(self.x, "x", 1))
        object.__setattr__(self, "r", _as_finite_array(self.r, "r", 1))
        object.__setattr__(self, "V", _as_finite_array(self.V, "V", 2))
        if self.V.shape[0] != self.r.shape[0]:
            raise ConfigurationError(
                f"V has {self.V.shape[0]} rows but r has length {self.r.shape[0]}"
            )

    def check_dims(self, p: int, d: int, m: int) -> None:
        if self.x.shape != (p,) or self.r.shape != (d,) or self.V.shape != (d, m):
            raise ConfigurationError(
                f"arrival shapes {self.x.shape}/{self.r.shape}/{self.V.shape} "
                f"do not match instance dims p={p}, d={d}, m={m}"
            )


@dataclass(frozen=True)
class Prediction:
    """Estimated reward vector and consumption matrix for one round."""

    r_hat: np.ndarray
    V_hat: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r_hat", _as_finite_array(self.r_hat, "r_hat", 1))
        object.__setattr__(self, "V_hat", _as_finite_array(self.V_hat, "V_hat", 2))
        if self.V_hat.shape[0] != self.r_hat.shape[0]:
            raise ConfigurationError(
                f"V_hat has {self.V_hat.shape[0]} rows but r_hat has length "
                f"{self.r_hat.shape[0]}"
            )


@dataclass(frozen=True)
class DualPair:
    """The two dual vectors pricing utility and feasibility of consumption."""

    lam: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lam", _as_finite_array(self.lam, "lam", 1))
        object.__setattr__(self, "theta", _as_finite_array(self.theta, "theta", 1))
        if self.lam.shape != self.theta.shape:
            raise ConfigurationError(
                f"lam has length {self.lam.shape[0]} but theta has length "
                f"{self.theta.shape[0]}"
            )


@dataclass(frozen=True)
class CostVector:
    """Composite linear objective coefficients for one decision round."""

    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "c", _as_finite_array(self.c, "c", 1))


def reward_and_consumption(mu: Prediction | Arrival) -> tuple[np.ndarray, np.ndarray]:
    """The (reward vector, consumption matrix) pair of a prediction or realization."""
    if isinstance(mu, Arrival):
        return mu.r, mu.V
    return mu.r_hat, mu.V_hat


def decision_cost(mu: Prediction | Arrival, omega: DualPair, zeta: float) -> CostVector:
    """Dual-adjusted cost vector ``r - V @ (lam + zeta * theta)``.

    This is the linear objective the per-round decision maximizes; the dual
    pair folds utility pricing and the feasibility penalty into the reward.
    """
    if zeta <= 0:
        raise ConfigurationError(f"zeta must be positive, got {zeta}")
    r, V = reward_and_consumption(mu)
    if V.shape[1] != omega.lam.shape[0]:
        raise ConfigurationError(
            f"V has {V.shape[1]} columns but duals have length {omega.lam.shape[0]}"
        )
    return CostVector(r - V @ (omega.lam + zeta * omega.theta))


def vec_pair(r: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Flatten (r, V) into the canonical layout: r first, V column-stacked."""
    return np.concatenate([np.asarray(r, dtype=float), np.asarray(V, dtype=float).ravel(order="F")])


def unvec_pair(vec: np.ndarray, d: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`vec_pair`: split a flat vector into (r, V)."""
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (d * (m + 1),):
        raise ConfigurationError(
            f"flat vector has shape {vec.shape}, expected ({d * (m + 1)},)"
        )
    return vec[:d].copy(), vec[d:].reshape((d, m), order="F").copy()
