"""Finite-difference utilities for validating analytic gradients.

Composed losses are evaluated parameter-by-parameter so central differences
can be compared against the manual reverse-mode gradients.  Surrogate-loss
checks filter out points where the oracle argmax is nearly tied, since the
piecewise-linear loss is not differentiable there.
"""

from __future__ import annotations

import numpy as np

from . import losses as losses_mod
from .core import Arrival, DualPair, Prediction, decision_cost
from .losses import LossKind, ls_cost_grad, ls_pred_grad, cost_grad_to_prediction_grad
from .models import backward, forward


def flatten_params(params: dict[str, np.ndarray]) -> tuple[np.ndarray, list]:
    names = sorted(params)
    spec = [(name, params[name].shape) for name in names]
    vec = np.concatenate([params[name].ravel() for name in names])
    return vec, spec


def write_params(params: dict[str, np.ndarray], vec: np.ndarray, spec: list) -> None:
    offset = 0
    for name, shape in spec:
        size = int(np.prod(shape))
        params[name][...] = vec[offset : offset + size].reshape(shape)
        offset += size


def model_loss_value(model, x, mu: Arrival, omega: DualPair, zeta: float,
                     kind: LossKind, oracle) -> float:
    pred = forward(model, x)
    if kind is LossKind.LS_PRED:
        return losses_mod.ls_pred_loss(pred, mu)
    c_hat = decision_cost(pred, omega, zeta)
    c = decision_cost(mu, omega, zeta)
    if kind is LossKind.LS_COST:
        return losses_mod.ls_cost_loss(c_hat, c)
    return losses_mod.spo_plus_loss(c_hat, c, oracle)


def model_loss_grads(model, x, mu: Arrival, omega: DualPair, zeta: float,
                     kind: LossKind, oracle) -> dict[str, np.ndarray]:
    pred = forward(model, x)
    if kind is LossKind.LS_PRED:
        g_r, g_V = ls_pred_grad(pred, mu)
    else:
        c_hat = decision_cost(pred, omega, zeta)
        c = decision_cost(mu, omega, zeta)
        if kind is LossKind.LS_COST:
            g_c = ls_cost_grad(c_hat, c)
        else:
            g_c = losses_mod.spo_plus_subgrad_cost(c_hat, c, oracle)
        g_r, g_V = cost_grad_to_prediction_grad(g_c, omega, zeta)
    return backward(model, x, (g_r, g_V))


def param_gradient_fd(model, x, mu, omega, zeta, kind, oracle,
                      h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of the composed loss over all parameters."""
    vec, spec = flatten_params(model.params)
    out = np.empty_like(vec)
    for i in range(vec.size):
        bumped = vec.copy()
        bumped[i] = vec[i] + h
        write_params(model.params, bumped, spec)
        hi = model_loss_value(model, x, mu, omega, zeta, kind, oracle)
        bumped[i] = vec[i] - h
        write_params(model.params, bumped, spec)
        lo = model_loss_value(model, x, mu, omega, zeta, kind, oracle)
        out[i] = (hi - lo) / (2.0 * h)
    write_params(model.params, vec, spec)
    return out


def param_gradient_analytic(model, x, mu, omega, zeta, kind, oracle) -> np.ndarray:
    grads = model_loss_grads(model, x, mu, omega, zeta, kind, oracle)
    vec, _ = flatten_params(grads)
    return vec


def relative_error(approx: np.ndarray, exact: np.ndarray) -> float:
    scale = max(float(np.linalg.norm(approx)), float(np.linalg.norm(exact)), 1e-12)
    return float(np.linalg.norm(approx - exact)) / scale


def argmax_margin(c: np.ndarray, vertices: np.ndarray) -> float:
    """Gap between the best and the best strictly-worse vertex objective."""
    objs = np.sort(vertices @ np.asarray(c, dtype=float))[::-1]
    best = objs[0]
    worse = objs[objs < best]
    if worse.size == 0:
        return np.inf
    return float(best - worse[0])


def central_difference(f, x0: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Coordinate-wise central differences of a scalar function of a vector."""
    x0 = np.asarray(x0, dtype=float)
    out = np.empty_like(x0)
    for i in range(x0.size):
        hi = x0.copy()
        hi[i] += h
        lo = x0.copy()
        lo[i] -= h
        out[i] = (f(hi) - f(lo)) / (2.0 * h)
    return out
