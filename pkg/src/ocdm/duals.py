"""Dual-variable machinery: utilities, consumption sets, and mirror descent.

The per-round dual losses are

    xi_t(lam)   = -v_t @ lam   + conj_u(lam)     over the domain Lambda,
    phi_t(theta) = -v_t @ theta + conj_dist(theta) over the domain Theta,

where ``conj_u`` is the convex conjugate of the negated utility and
``conj_dist`` the conjugate of the Euclidean distance to the consumption
set.  With Euclidean geometry the mirror-descent update reduces to a
projected subgradient step, so each domain only needs a projection and a
conjugate subgradient.

Utility variants:

* ``ZeroUtility``: no consumption preference; the lambda domain collapses
  to {0} and lambda never moves.
* ``LeftoverValueUtility(y, b)``: consumption valued at price y up to the
  per-round budget cap b, ``u(v) = y @ min(v, b)``.  This is the concave
  normalization of a budget-surplus account (it equals ``y @ b`` minus the
  value of leftover ``y @ max(b - v, 0)``), chosen so that u(0) = 0, u is
  concave, and the conjugate is finite on the box Lambda = [-y, 0] with
  constant subgradient b.
* ``SeparableQuadraticUtility``: ``u(v) = sum_i v_i (1 - v_i)``, rewarding
  spread-out consumption; Lambda is truncated to the box [-1, 1]^m, which
  covers the gradient range of u on consumption averages in [0, 1]^m.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .core import ConfigurationError

_MEMBERSHIP_TOL = 1e-9


class UtilityModel(ABC):
    """Concave consumption utility with the conjugate data its duals need."""

    m: int
    lipschitz: float

    @abstractmethod
    def value(self, v: np.ndarray) -> float:
        """u(v)."""

    @abstractmethod
    def conj(self, lam: np.ndarray) -> float:
        """Convex conjugate of -u, evaluated on Lambda."""

    @abstractmethod
    def conj_subgrad(self, lam: np.ndarray) -> np.ndarray:
        """A subgradient of the conjugate at lam."""

    @abstractmethod
    def conj_argmax(self, v: np.ndarray) -> np.ndarray:
        """The lam in Lambda attaining Fenchel-Young equality at v."""

    @abstractmethod
    def project_lambda(self, z: np.ndarray) -> np.ndarray:
        """Euclidean projection onto Lambda."""

    @abstractmethod
    def contains_lambda(self, lam: np.ndarray) -> bool: ...

    @abstractmethod
    def lambda_diameter(self) -> float:
        """Euclidean diameter of Lambda."""

    @abstractmethod
    def conj_subgrad_norm_bound(self) -> float:
        """Upper bound on ||conj_subgrad|| over Lambda (feeds the G constants)."""

    def bregman_diameter_bound(self) -> float:
        return 0.5 * self.lambda_diameter() ** 2


class ZeroUtility(UtilityModel):
    def __init__(self, m: int):
        self.m = m
        self.lipschitz = 0.0

    def value(self, v):
        return 0.0

    def conj(self, lam):
        return 0.0

    def conj_subgrad(self, lam):
        return np.zeros(self.m)

    def conj_argmax(self, v):
        return np.zeros(self.m)

    def project_lambda(self, z):
        return np.zeros(self.m)

    def contains_lambda(self, lam):
        return bool(np.all(np.abs(lam) <= _MEMBERSHIP_TOL))

    def lambda_diameter(self):
        return 0.0

    def conj_subgrad_norm_bound(self):
        return 0.0


class LeftoverValueUtility(UtilityModel):
    def __init__(self, y, b):
        self.y = np.asarray(y, dtype=float)
        self.b = np.asarray(b, dtype=float)
        if self.y.shape != self.b.shape or self.y.ndim != 1:
            raise ConfigurationError("y and b must be 1-d vectors of equal length")
        if np.any(self.y < 0) or np.any(self.b < 0):
            raise ConfigurationError("prices y and budgets b must be nonnegative")
        self.m = self.y.shape[0]
        self.lipschitz = float(np.linalg.norm(self.y))

    def value(self, v):
        return float(self.y @ np.minimum(np.asarray(v, dtype=float), self.b))

    def conj(self, lam):
        return float((np.asarray(lam) + self.y) @ self.b)

    def conj_subgrad(self, lam):
        return self.b.copy()

    def conj_argmax(self, v):
        return np.where(np.asarray(v) >= self.b, 0.0, -self.y)

    def project_lambda(self, z):
        return np.clip(np.asarray(z, dtype=float), -self.y, 0.0)

    def contains_lambda(self, lam):
        lam = np.asarray(lam)
        return bool(np.all(lam >= -self.y - _MEMBERSHIP_TOL) and np.all(lam <= _MEMBERSHIP_TOL))

    def lambda_diameter(self):
        return float(np.linalg.norm(self.y))

    def conj_subgrad_norm_bound(self):
        return float(np.linalg.norm(self.b))


class SeparableQuadraticUtility(UtilityModel):
    def __init__(self, m: int):
        self.m = m
        self.lipschitz = 1.0  # per-coordinate gradient bound on averages in [0, 1]

    def value(self, v):
        v = np.asarray(v, dtype=float)
        return float(np.sum(v * (1.0 - v)))

    def conj(self, lam):
        lam = np.asarray(lam, dtype=float)
        return float(np.sum((lam + 1.0) ** 2) / 4.0)

    def conj_subgrad(self, lam):
        return (np.asarray(lam, dtype=float) + 1.0) / 2.0

    def conj_argmax(self, v):
        return 2.0 * np.asarray(v, dtype=float) - 1.0

    def project_lambda(self, z):
        return np.clip(np.asarray(z, dtype=float), -1.0, 1.0)

    def contains_lambda(self, lam):
        return bool(np.all(np.abs(np.asarray(lam)) <= 1.0 + _MEMBERSHIP_TOL))

    def lambda_diameter(self):
        return 2.0 * math.sqrt(self.m)

    def conj_subgrad_norm_bound(self):
        return math.sqrt(self.m)  # (lam + 1)/2 lies in [0, 1]^m


class ConsumptionSet(ABC):
    """Closed convex feasible region for averaged consumption."""

    m: int
    boundary_radius: float  # distance from 0 to the boundary

    @abstractmethod
    def contains(self, v: np.ndarray) -> bool: ...

    @abstractmethod
    def dist(self, v: np.ndarray) -> float:
        """Euclidean distance from v to the set."""

    @abstractmethod
    def conj(self, theta: np.ndarray) -> float:
        """Conjugate of the distance function, on Theta."""

    @abstractmethod
    def conj_subgrad(self, theta: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def conj_argmax(self, v: np.ndarray) -> np.ndarray:
        """The theta in Theta attaining Fenchel-Young equality at v."""

    @abstractmethod
    def project_theta(self, z: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def contains_theta(self, theta: np.ndarray) -> bool: ...

    @abstractmethod
    def theta_diameter(self) -> float: ...

    @abstractmethod
    def conj_subgrad_norm_bound(self) -> float: ...

    def bregman_diameter_bound(self) -> float:
        return 0.5 * self.theta_diameter() ** 2


def project_theta_box_ball(z: np.ndarray) -> np.ndarray:
    """Exact Euclidean projection onto {theta >= 0, ||theta||_2 <= 1}.

    Clamping to the nonnegative orthant and then rescaling into the unit
    ball is exact for this intersection (the orthant is a cone, so the two
    projections commute).  Already-feasible points are returned unchanged,
    which makes the projection exactly idempotent.
    """
    z = np.asarray(z, dtype=float)
    if np.all(z >= 0.0) and np.linalg.norm(z) <= 1.0 + _MEMBERSHIP_TOL:
        return z
    zp = np.maximum(z, 0.0)
    norm = np.linalg.norm(zp)
    if norm > 1.0:
        zp = zp / norm
    return zp


class UpperBoxSet(ConsumptionSet):
    """Componentwise budget cap {v : v <= b}."""

    def __init__(self, b):
        self.b = np.asarray(b, dtype=float)
        if self.b.ndim != 1:
            raise ConfigurationError("b must be a 1-d vector")
        if np.any(self.b <= 0):
            raise ConfigurationError("budgets must be strictly positive")
        self.m = self.b.shape[0]
        self.boundary_radius = float(np.min(self.b))

    def contains(self, v):
        return bool(np.all(np.asarray(v) <= self.b))

    def dist(self, v):
        over = np.maximum(np.asarray(v, dtype=float) - self.b, 0.0)
        return float(np.linalg.norm(over))

    def conj(self, theta):
        return float(np.asarray(theta) @ self.b)

    def conj_subgrad(self, theta):
        return self.b.copy()

    def conj_argmax(self, v):
        over = np.maximum(np.asarray(v, dtype=float) - self.b, 0.0)
        norm = np.linalg.norm(over)
        if norm == 0.0:
            return np.zeros(self.m)
        return over / norm

    def project_theta(self, z):
        return project_theta_box_ball(z)

    def contains_theta(self, theta):
        theta = np.asarray(theta)
        return bool(
            np.all(theta >= -_MEMBERSHIP_TOL)
            and np.linalg.norm(theta) <= 1.0 + _MEMBERSHIP_TOL
        )

    def theta_diameter(self):
        return math.sqrt(2.0) if self.m >= 2 else 1.0

    def conj_subgrad_norm_bound(self):
        return float(np.linalg.norm(self.b))


def subgrad_xi(lam: np.ndarray, v_t: np.ndarray, utility: UtilityModel) -> np.ndarray:
    """Subgradient of the lambda-side dual loss at lam given consumption v_t."""
    return -np.asarray(v_t, dtype=float) + utility.conj_subgrad(lam)


def subgrad_phi(theta: np.ndarray, v_t: np.ndarray, cset: ConsumptionSet) -> np.ndarray:
    """Subgradient of the theta-side dual loss at theta given consumption v_t."""
    return -np.asarray(v_t, dtype=float) + cset.conj_subgrad(theta)


def omd_step(point: np.ndarray, grad: np.ndarray, eta: float, projector) -> np.ndarray:
    """One Euclidean mirror-descent step: project(point - eta * grad)."""
    if eta < 0:
        raise ConfigurationError(f"step size must be nonnegative, got {eta}")
    return projector(np.asarray(point, dtype=float) - eta * np.asarray(grad, dtype=float))


def lemma1_step_sizes(D: float, G: float, T: int) -> float:
    """Constant step size sqrt(D) / (G sqrt(T)) for a T-round dual sequence."""
    if D <= 0 or G <= 0 or T < 1:
        raise ConfigurationError(f"need D, G > 0 and T >= 1, got D={D}, G={G}, T={T}")
    return math.sqrt(D) / (G * math.sqrt(T))


def power_schedule_step_size(D: float, G: float, T: int, beta: float) -> float:
    """Step size sqrt(D) / (G * T^(1 - 1/(2 beta))) for updates at floor(k^beta)."""
    if D <= 0 or G <= 0 or T < 1 or beta < 1:
        raise ConfigurationError("need D, G > 0, T >= 1, beta >= 1")
    return math.sqrt(D) / (G * T ** (1.0 - 1.0 / (2.0 * beta)))


def periodic_schedule_step_size(D: float, G: float, T: int, period: int) -> float:
    """Step size sqrt(D) / (G sqrt(T * period)) for updates every `period` rounds.

    Matches lemma1_step_sizes at period 1; the extra sqrt(period) compensates
    for the period-long stretches over which each iterate stays fixed.
    """
    if period < 1:
        raise ConfigurationError(f"period must be >= 1, got {period}")
    return lemma1_step_sizes(D, G, T * period)


@dataclass
class DualState:
    """Mutable dual iterates plus the constants and diagnostics of their run."""

    lam: np.ndarray
    theta: np.ndarray
    eta_lambda: float
    eta_theta: float
    D_lambda: float
    D_theta: float
    G_lambda: float
    G_theta: float
    xi_acc: float = 0.0  # running sum of xi_t(lam_t)
    phi_acc: float = 0.0  # running sum of phi_t(theta_t)

    def accumulate(self, v_t: np.ndarray, utility: UtilityModel, cset: ConsumptionSet) -> None:
        v_t = np.asarray(v_t, dtype=float)
        self.xi_acc += float(-v_t @ self.lam) + utility.conj(self.lam)
        self.phi_acc += float(-v_t @ self.theta) + cset.conj(self.theta)

    def update(self, v_t: np.ndarray, utility: UtilityModel, cset: ConsumptionSet) -> None:
        if self.eta_lambda > 0:
            self.lam = omd_step(
                self.lam, subgrad_xi(self.lam, v_t, utility), self.eta_lambda,
                utility.project_lambda,
            )
        if self.eta_theta > 0:
            self.theta = omd_step(
                self.theta, subgrad_phi(self.theta, v_t, cset), self.eta_theta,
                cset.project_theta,
            )


def initial_duals(utility: UtilityModel, cset: ConsumptionSet) -> tuple[np.ndarray, np.ndarray]:
    """Starting iterates: the projection of zero onto each domain."""
    return utility.project_lambda(np.zeros(utility.m)), cset.project_theta(np.zeros(cset.m))
