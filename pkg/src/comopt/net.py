"""Dense feed-forward surrogate with exact manual backpropagation and Adam.

Everything here is float64 numpy. Parameter and input gradients are exact
(no finite-difference shortcuts inside the implementation; the test suite
checks them *against* central finite differences instead).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GradientError(ValueError):
    """Raised on non-finite gradients or gradient/parameter shape mismatch."""


def leaky_relu(z, leak: float = 0.3):
    """Elementwise z if z >= 0 else leak * z. Accepts scalars or arrays."""
    arr = np.asarray(z, dtype=np.float64)
    out = np.where(arr >= 0.0, arr, leak * arr)
    return float(out) if out.ndim == 0 else out


def _lrelu_slope(z: np.ndarray, leak: float) -> np.ndarray:
    return np.where(z >= 0.0, 1.0, leak)


@dataclass
class DenseLayer:
    """One affine layer; weights are (fan_out, fan_in), bias is (fan_out,)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError("weights must be a 2-d matrix")
        if self.bias.shape != (self.weights.shape[0],):
            raise ValueError("bias length must equal weight fan_out")

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.bias.copy())


@dataclass
class ObjectiveModel:
    """Feed-forward surrogate: affine layers with leaky-ReLU between them.

    The final layer maps to a single scalar prediction; `leak` is the
    negative-side slope of the activation (0.3 by default).
    """

    layers: list[DenseLayer] = field(default_factory=list)
    leak: float = 0.3

    def __post_init__(self):
        if not self.layers:
            raise ValueError("model needs at least one layer")
        if not 0.0 < self.leak < 1.0:
            raise ValueError("leak must lie in (0, 1)")
        for prev, nxt in zip(self.layers[:-1], self.layers[1:]):
            if nxt.fan_in != prev.fan_out:
                raise ValueError("layer fan_in must match previous fan_out")
        if self.layers[-1].fan_out != 1:
            raise ValueError("final layer must produce a single scalar")

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    def copy(self) -> "ObjectiveModel":
        return ObjectiveModel([lyr.copy() for lyr in self.layers], self.leak)

    def parameter_count(self) -> int:
        return sum(lyr.weights.size + lyr.bias.size for lyr in self.layers)


def build_model(input_dim: int, hidden=(64, 64), leak: float = 0.3,
                rng: np.random.Generator | None = None) -> ObjectiveModel:
    """He-style uniform init: W ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), b = 0."""
    if rng is None:
        rng = np.random.default_rng()
    dims = [int(input_dim), *[int(h) for h in hidden], 1]
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append(DenseLayer(weights, np.zeros(fan_out)))
    return ObjectiveModel(layers, leak)


def _as_batch(model: ObjectiveModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ValueError(
            f"expected batch of shape (n, {model.input_dim}), got {X.shape}")
    return X


def _forward_cached(model: ObjectiveModel, X: np.ndarray):
    """Returns (pre-activations per layer, post-activations incl. input)."""
    acts = [X]
    pres = []
    a = X
    for k, lyr in enumerate(model.layers):
        z = a @ lyr.weights.T + lyr.bias
        pres.append(z)
        if k < len(model.layers) - 1:
            a = leaky_relu(z, model.leak)
            acts.append(a)
    return pres, acts


def forward_batch(model: ObjectiveModel, X) -> np.ndarray:
    """Surrogate predictions for a batch of designs, shape (n,)."""
    X = _as_batch(model, X)
    pres, _ = _forward_cached(model, X)
    return pres[-1][:, 0]


def forward(model: ObjectiveModel, x) -> float:
    """Scalar surrogate prediction for one design vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise ValueError(f"expected design of shape ({model.input_dim},), got {x.shape}")
    return float(forward_batch(model, x[None, :])[0])


def input_gradient_batch(model: ObjectiveModel, X) -> np.ndarray:
    """Exact d prediction / d input for every row of X, shape (n, input_dim)."""
    X = _as_batch(model, X)
    pres, _ = _forward_cached(model, X)
    g = np.ones((X.shape[0], 1))
    for k in range(len(model.layers) - 1, -1, -1):
        g = g @ model.layers[k].weights
        if k > 0:
            g = g * _lrelu_slope(pres[k - 1], model.leak)
    return g


def input_gradient(model: ObjectiveModel, x) -> np.ndarray:
    """Exact gradient of the prediction w.r.t. one design vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise ValueError(f"expected design of shape ({model.input_dim},), got {x.shape}")
    return input_gradient_batch(model, x[None, :])[0]


def loss_gradients(model: ObjectiveModel, X, dloss_dpred) -> list:
    """Backprop primitive: gradients of sum_i g_i * f(x_i) w.r.t. every
    parameter, where g = dloss_dpred. Returns [(dW, db)] aligned with layers."""
    X = _as_batch(model, X)
    g = np.asarray(dloss_dpred, dtype=np.float64)
    if g.shape != (X.shape[0],):
        raise ValueError("dloss_dpred must have one entry per batch row")
    pres, acts = _forward_cached(model, X)
    grads: list = [None] * len(model.layers)
    gk = g[:, None]
    for k in range(len(model.layers) - 1, -1, -1):
        grads[k] = (gk.T @ acts[k], gk.sum(axis=0))
        if k > 0:
            gk = (gk @ model.layers[k].weights) * _lrelu_slope(pres[k - 1], model.leak)
    return grads


def param_gradients(model: ObjectiveModel, batch, loss_spec: str) -> list:
    """Gradient of a batch-mean loss w.r.t. every parameter.

    `batch` is a list of (design, target, weight) triples. `loss_spec` picks
    the per-point term: "squared_error" gives mean_i w_i * (f(x_i)-t_i)^2 / 2,
    "linear" gives mean_i w_i * f(x_i) (sign carried by the weight).
    """
    if len(batch) == 0:
        raise ValueError("param_gradients requires a nonempty batch")
    X = np.stack([np.asarray(x, dtype=np.float64) for x, _, _ in batch])
    targets = np.array([t for _, t, _ in batch], dtype=np.float64)
    weights = np.array([w for _, _, w in batch], dtype=np.float64)
    n = len(batch)
    if loss_spec == "squared_error":
        g = weights * (forward_batch(model, X) - targets) / n
    elif loss_spec == "linear":
        g = weights / n
    else:
        raise ValueError(f"unknown loss_spec {loss_spec!r}")
    return loss_gradients(model, X, g)


def zero_gradients(model: ObjectiveModel) -> list:
    return [(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in model.layers]


def add_gradients(a: list, b: list) -> list:
    return [(aw + bw, ab + bb) for (aw, ab), (bw, bb) in zip(a, b)]


@dataclass
class AdamState:
    """Bias-corrected Adam moments, one (weight, bias) pair per layer."""

    step_count: int
    first_moment: list
    second_moment: list
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def init_adam(model: ObjectiveModel, learning_rate: float = 1e-3) -> AdamState:
    return AdamState(
        step_count=0,
        first_moment=zero_gradients(model),
        second_moment=zero_gradients(model),
        learning_rate=learning_rate,
    )


def adam_step(state: AdamState, model: ObjectiveModel, grads: list) -> None:
    """One in-place Adam update. Validates gradients first so a non-finite
    gradient leaves both the state and the parameters untouched."""
    if len(grads) != len(model.layers):
        raise GradientError("gradient structure does not match model layers")
    for lyr, (dw, db) in zip(model.layers, grads):
        if dw.shape != lyr.weights.shape or db.shape != lyr.bias.shape:
            raise GradientError("gradient shapes do not match parameters")
        if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
            raise GradientError("non-finite gradient; parameters left untouched")
    state.step_count += 1
    c1 = 1.0 - state.beta1 ** state.step_count
    c2 = 1.0 - state.beta2 ** state.step_count
    for lyr, moms1, moms2, (dw, db) in zip(
            model.layers, state.first_moment, state.second_moment, grads):
        for param, m, v, grad in ((lyr.weights, moms1[0], moms2[0], dw),
                                  (lyr.bias, moms1[1], moms2[1], db)):
            m *= state.beta1
            m += (1.0 - state.beta1) * grad
            v *= state.beta2
            v += (1.0 - state.beta2) * grad * grad
            param -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)


def save_model(model: ObjectiveModel, path) -> None:
    arrays = {"leak": np.array(model.leak), "n_layers": np.array(len(model.layers))}
    for k, lyr in enumerate(model.layers):
        arrays[f"w{k}"] = lyr.weights
        arrays[f"b{k}"] = lyr.bias
    np.savez(path, **arrays)


def load_model(path) -> ObjectiveModel:
    data = np.load(path)
    n = int(data["n_layers"])
    layers = [DenseLayer(data[f"w{k}"], data[f"b{k}"]) for k in range(n)]
    return ObjectiveModel(layers, float(data["leak"]))
