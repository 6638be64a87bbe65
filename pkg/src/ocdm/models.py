"""Prediction models, Adam training, and the reference predictors.

Models map a feature vector to the flat output layout of ``core.vec_pair``
(rewards first, consumption column-stacked).  Instances whose consumption
matrix is structurally the identity use the reduced layout: the model emits
rewards only and the consumption block is pinned to the identity and never
learned.

The training loop is full-batch Adam over the running history, warm-started
from the previous refit.  Gradients are computed by manual reverse mode, in
batch form, because refits happen hundreds of times per episode on a
growing dataset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import Arrival, ConfigurationError, DualPair, Prediction, vec_pair
from .losses import LossKind, spo_plus_subgrad_cost_batch
from .oracles import FeasibleRegionOracle


def _uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class _ModelBase:
    """Shared output plumbing: flat vector <-> Prediction."""

    p: int
    d: int
    m: int
    identity_consumption: bool
    params: dict[str, np.ndarray]
    default_lr: float

    @property
    def n_out(self) -> int:
        return self.d if self.identity_consumption else self.d * (self.m + 1)

    def output_to_prediction(self, y: np.ndarray) -> Prediction:
        if self.identity_consumption:
            return Prediction(y, np.eye(self.d))
        return Prediction(y[: self.d], y[self.d :].reshape((self.d, self.m), order="F"))

    def prediction_grad_to_output(self, g_r: np.ndarray, g_V: np.ndarray | None) -> np.ndarray:
        if self.identity_consumption:
            return np.asarray(g_r, dtype=float)
        if g_V is None:
            g_V = np.zeros((self.d, self.m))
        return vec_pair(g_r, g_V)

    def clone(self):
        dup = object.__new__(type(self))
        dup.__dict__.update(self.__dict__)
        dup.params = {k: v.copy() for k, v in self.params.items()}
        return dup


class LinearModel(_ModelBase):
    """Affine predictor: output = W x + b."""

    default_lr = 1e-2

    def __init__(self, p: int, d: int, m: int, rng: np.random.Generator,
                 identity_consumption: bool = False):
        self.p, self.d, self.m = p, d, m
        self.identity_consumption = identity_consumption
        out = self.n_out
        self.params = {
            "W": _uniform_init(rng, (out, p), p),
            "b": _uniform_init(rng, (out,), p),
        }

    def forward_flat(self, x: np.ndarray) -> np.ndarray:
        return self.params["W"] @ x + self.params["b"]

    def forward_batch(self, X: np.ndarray):
        return X @ self.params["W"].T + self.params["b"], X

    def backward_batch(self, cache, g_Y: np.ndarray) -> dict[str, np.ndarray]:
        X = cache
        return {"W": g_Y.T @ X, "b": g_Y.sum(axis=0)}


class MlpModel(_ModelBase):
    """Two-layer rectifier network with a 128-unit hidden layer."""

    default_lr = 1e-3

    def __init__(self, p: int, d: int, m: int, rng: np.random.Generator,
                 identity_consumption: bool = False, hidden: int = 128):
        self.p, self.d, self.m = p, d, m
        self.identity_consumption = identity_consumption
        self.hidden = hidden
        out = self.n_out
        self.params = {
            "W1": _uniform_init(rng, (hidden, p), p),
            "b1": _uniform_init(rng, (hidden,), p),
            "W2": _uniform_init(rng, (out, hidden), hidden),
            "b2": _uniform_init(rng, (out,), hidden),
        }

    def forward_flat(self, x: np.ndarray) -> np.ndarray:
        h = np.maximum(self.params["W1"] @ x + self.params["b1"], 0.0)
        return self.params["W2"] @ h + self.params["b2"]

    def forward_batch(self, X: np.ndarray):
        Z = X @ self.params["W1"].T + self.params["b1"]
        H = np.maximum(Z, 0.0)
        Y = H @ self.params["W2"].T + self.params["b2"]
        return Y, (X, Z, H)

    def backward_batch(self, cache, g_Y: np.ndarray) -> dict[str, np.ndarray]:
        X, Z, H = cache
        g_H = g_Y @ self.params["W2"]
        g_Z = g_H * (Z > 0.0)
        return {
            "W2": g_Y.T @ H,
            "b2": g_Y.sum(axis=0),
            "W1": g_Z.T @ X,
            "b1": g_Z.sum(axis=0),
        }


def forward(model: _ModelBase, x: np.ndarray) -> Prediction:
    """Evaluate the model at one feature vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.p,):
        raise ConfigurationError(f"feature shape {x.shape}, expected ({model.p},)")
    return model.output_to_prediction(model.forward_flat(x))


def backward(model: _ModelBase, x: np.ndarray,
             grad_prediction: tuple[np.ndarray, np.ndarray | None]) -> dict[str, np.ndarray]:
    """Parameter gradients at x for an upstream (d_r, d_V) prediction gradient."""
    g_r, g_V = grad_prediction
    g_y = model.prediction_grad_to_output(g_r, g_V)
    _, cache = model.forward_batch(np.asarray(x, dtype=float)[None, :])
    return model.backward_batch(cache, g_y[None, :])


@dataclass
class AdamState:
    """Bias-corrected Adam accumulators, one slot per parameter array."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def make_adam_state(model: _ModelBase, lr: float | None = None) -> AdamState:
    return AdamState(lr=model.default_lr if lr is None else lr)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> dict[str, np.ndarray]:
    """Apply one Adam update in place; returns the updated params."""
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        params[name] -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


class TrainingBuffer:
    """Growing column store of observed arrivals in training layout."""

    def __init__(self, p: int, d: int, m: int, identity_consumption: bool, capacity: int = 64):
        self.p, self.d, self.m = p, d, m
        self.identity_consumption = identity_consumption
        self.n = 0
        self._X = np.empty((capacity, p))
        self._R = np.empty((capacity, d))
        self._VT = None if identity_consumption else np.empty((capacity, m, d))

    def _grow(self, need: int) -> None:
        cap = self._X.shape[0]
        if need <= cap:
            return
        new_cap = max(need, 2 * cap)

        def bigger(old: np.ndarray) -> np.ndarray:
            new = np.empty((new_cap,) + old.shape[1:])
            new[: self.n] = old[: self.n]
            return new

        self._X = bigger(self._X)
        self._R = bigger(self._R)
        if self._VT is not None:
            self._VT = bigger(self._VT)

    def append(self, arrival: Arrival) -> None:
        self._grow(self.n + 1)
        self._X[self.n] = arrival.x
        self._R[self.n] = arrival.r
        if self._VT is not None:
            self._VT[self.n] = arrival.V.T
        self.n += 1

    @property
    def X(self) -> np.ndarray:
        return self._X[: self.n]

    @property
    def R(self) -> np.ndarray:
        return self._R[: self.n]

    def costs(self, alpha: np.ndarray) -> np.ndarray:
        """Realized cost rows r - V alpha."""
        if self.identity_consumption:
            return self.R - alpha
        return self.R - np.einsum("smd,m->sd", self._VT[: self.n], alpha)

    def targets_flat(self) -> np.ndarray:
        """Target rows in the flat output layout (for raw prediction error)."""
        if self.identity_consumption:
            return self.R
        s = self.n
        return np.concatenate(
            [self.R, self._VT[:s].reshape(s, self.m * self.d)], axis=1
        )

    @classmethod
    def from_history(cls, history, p: int, d: int, m: int,
                     identity_consumption: bool) -> "TrainingBuffer":
        buf = cls(p, d, m, identity_consumption, capacity=max(len(history), 1))
        for arrival in history:
            buf.append(arrival)
        return buf


def _output_costs(Y: np.ndarray, alpha: np.ndarray, d: int, m: int,
                  identity_consumption: bool) -> np.ndarray:
    if identity_consumption:
        return Y - alpha
    s = Y.shape[0]
    return Y[:, :d] - np.einsum("smd,m->sd", Y[:, d:].reshape(s, m, d), alpha)


def _cost_grad_to_output(g_C: np.ndarray, alpha: np.ndarray, d: int, m: int,
                         identity_consumption: bool) -> np.ndarray:
    if identity_consumption:
        return g_C
    s = g_C.shape[0]
    g_V = -np.einsum("sd,m->smd", g_C, alpha).reshape(s, m * d)
    return np.concatenate([g_C, g_V], axis=1)


def fit_erm(
    model: _ModelBase,
    history,
    omega: DualPair,
    zeta: float,
    loss: LossKind,
    budget: int,
    oracle: FeasibleRegionOracle | None = None,
    adam: AdamState | None = None,
) -> _ModelBase:
    """Refit the model on the observed history under the current duals.

    Runs `budget` full-batch Adam steps on the mean surrogate loss,
    warm-starting from the incoming parameters (and incoming Adam state,
    when given).  An empty history or zero budget returns the model
    unchanged.
    """
    if isinstance(history, TrainingBuffer):
        buf = history
    else:
        if len(history) == 0:
            return model
        buf = TrainingBuffer.from_history(
            history, model.p, model.d, model.m, model.identity_consumption
        )
    if buf.n == 0 or budget <= 0:
        return model
    if loss is LossKind.SPO_PLUS and oracle is None:
        raise ConfigurationError("decision oracle required to train with the surrogate loss")
    if adam is None:
        adam = make_adam_state(model)

    s = buf.n
    X = buf.X
    alpha = omega.lam + zeta * omega.theta
    if loss is LossKind.LS_PRED:
        target = buf.targets_flat()
    else:
        C = buf.costs(alpha)
        w_c = oracle.solve_batch(C) if loss is LossKind.SPO_PLUS else None

    for _ in range(budget):
        Y, cache = model.forward_batch(X)
        if loss is LossKind.LS_PRED:
            g_Y = 2.0 * (Y - target) / s
        else:
            C_hat = _output_costs(Y, alpha, model.d, model.m, model.identity_consumption)
            if loss is LossKind.LS_COST:
                g_C = 2.0 * (C_hat - C) / s
            else:
                g_C = spo_plus_subgrad_cost_batch(C_hat, C, oracle, w_c) / s
            g_Y = _cost_grad_to_output(g_C, alpha, model.d, model.m,
                                       model.identity_consumption)
        grads = model.backward_batch(cache, g_Y)
        adam_step(model.params, grads, adam)
    return model


def erm_objective(model: _ModelBase, buf: TrainingBuffer, omega: DualPair, zeta: float,
                  loss: LossKind, oracle: FeasibleRegionOracle | None = None) -> float:
    """Mean surrogate loss of the model over the buffer (diagnostic)."""
    Y, _ = model.forward_batch(buf.X)
    alpha = omega.lam + zeta * omega.theta
    if loss is LossKind.LS_PRED:
        return float(np.sum((Y - buf.targets_flat()) ** 2) / buf.n)
    C = buf.costs(alpha)
    C_hat = _output_costs(Y, alpha, model.d, model.m, model.identity_consumption)
    if loss is LossKind.LS_COST:
        return float(np.sum((C_hat - C) ** 2) / buf.n)
    w_c = oracle.solve_batch(C)
    w_q = oracle.solve_batch(2.0 * C_hat - C)
    vals = np.einsum("sd,sd->s", 2.0 * C_hat - C, w_q) \
        - 2.0 * np.einsum("sd,sd->s", C_hat, w_c) \
        + np.einsum("sd,sd->s", C, w_c)
    return float(vals.mean())


class BenchmarkKind(Enum):
    SAA = "saa"
    TRUE_MODEL = "true"
    HINDSIGHT = "hindsight"


def benchmark_predict(
    kind: BenchmarkKind,
    x: np.ndarray,
    history,
    current_arrival: Arrival | None = None,
    instance=None,
) -> Prediction:
    """Reference predictors: running means, the generating model, or the realization."""
    if kind is BenchmarkKind.HINDSIGHT:
        if current_arrival is None:
            raise ConfigurationError("hindsight prediction needs the current arrival")
        return Prediction(current_arrival.r, current_arrival.V)
    if kind is BenchmarkKind.TRUE_MODEL:
        if instance is None or not hasattr(instance, "conditional_mean"):
            raise ConfigurationError(
                "true-model prediction is only available on synthetic instances"
            )
        return instance.conditional_mean(x)
    # SAA: plain running means, accumulated in arrival order.
    if len(history) == 0:
        if current_arrival is not None:
            d, m = current_arrival.r.shape[0], current_arrival.V.shape[1]
            return Prediction(np.zeros(d), np.zeros((d, m)))
        raise ConfigurationError("empty-history SAA needs the current arrival for shapes")
    r_sum = np.zeros_like(history[0].r)
    V_sum = np.zeros_like(history[0].V)
    for arrival in history:
        r_sum += arrival.r
        V_sum += arrival.V
    n = len(history)
    return Prediction(r_sum / n, V_sum / n)


def save_model(path, model: _ModelBase) -> None:
    """Write a text checkpoint: header, then one shape + row-major block per array."""
    kind = "linear" if isinstance(model, LinearModel) else "mlp"
    with open(path, "w") as fh:
        fh.write("ocdm-model 1\n")
        fh.write(f"{kind} {model.p} {model.d} {model.m} "
                 f"{int(model.identity_consumption)}\n")
        for name in sorted(model.params):
            arr = model.params[name]
            fh.write(f"{name} {' '.join(str(s) for s in arr.shape)}\n")
            fh.write(" ".join(repr(float(v)) for v in arr.ravel(order="C")) + "\n")


def load_model(path) -> _ModelBase:
    with open(path) as fh:
        magic = fh.readline().split()
        if magic[:1] != ["ocdm-model"]:
            raise ConfigurationError(f"not a model checkpoint: {path}")
        kind, p, d, m, ident = fh.readline().split()
        p, d, m, ident = int(p), int(d), int(m), bool(int(ident))
        params: dict[str, np.ndarray] = {}
        while True:
            header = fh.readline()
            if not header.strip():
                break
            parts = header.split()
            name, shape = parts[0], tuple(int(s) for s in parts[1:])
            values = np.array([float(v) for v in fh.readline().split()])
            params[name] = values.reshape(shape)
    rng = np.random.default_rng(0)
    if kind == "linear":
        model: _ModelBase = LinearModel(p, d, m, rng, identity_consumption=ident)
    else:
        hidden = params["W1"].shape[0]
        model = MlpModel(p, d, m, rng, identity_consumption=ident, hidden=hidden)
    model.params = params
    return model
