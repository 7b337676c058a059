"""Small differentiable predictors with analytic gradients.

Three architectures: a linear model, a logistic regression (one weight
layer plus sigmoid), and a three-layer perceptron. Parameters live in a
flat vector with an explicit layout so training loops, serialization, and
finite-difference checks all share one representation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionMismatch, NonFiniteParams
from .util import spawn_rng
from .validation import as_float_matrix, as_float_vector

ARCHITECTURES = ("linear", "logistic", "mlp3")
ACTIVATIONS = ("relu", "tanh")
OUTPUT_KINDS = ("probability", "real")
LOSS_KINDS = ("mse", "binary_cross_entropy")

_PROB_CLIP = 1e-7
_TAG_INIT = 11


def canonical_loss(loss: str) -> str:
    if loss == "bce":
        return "binary_cross_entropy"
    if loss not in LOSS_KINDS:
        raise ValueError(f"unknown loss {loss!r}; expected one of {LOSS_KINDS}")
    return loss


@dataclass(frozen=True)
class ModelSpec:
    """Architecture descriptor.

    ``output`` defaults to "real" for the linear architecture and
    "probability" otherwise; a probability output applies a logistic link
    to the final pre-activation.
    """

    architecture: str
    input_dim: int
    hidden_dims: tuple = (32, 16)
    activation: str = "relu"
    output: str = None

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.input_dim < 1:
            raise ValueError("input_dim must be at least 1")
        hidden = tuple(int(h) for h in self.hidden_dims)
        if self.architecture == "mlp3":
            if len(hidden) != 2 or min(hidden) < 1:
                raise ValueError("mlp3 needs a pair of positive hidden sizes")
        object.__setattr__(self, "hidden_dims", hidden)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        output = self.output
        if output is None:
            output = "real" if self.architecture == "linear" else "probability"
        if output not in OUTPUT_KINDS:
            raise ValueError(f"unknown output kind {output!r}")
        if self.architecture == "linear" and output == "probability":
            raise ValueError("linear architecture produces real outputs")
        if self.architecture == "logistic" and output == "real":
            raise ValueError("logistic architecture produces probabilities")
        object.__setattr__(self, "output", output)

    def layer_shapes(self):
        if self.architecture in ("linear", "logistic"):
            return [(self.input_dim, 1)]
        h1, h2 = self.hidden_dims
        return [(self.input_dim, h1), (h1, h2), (h2, 1)]

    @property
    def n_params(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_shapes())


def param_layout(spec: ModelSpec):
    """Flat-vector layout: one (name, shape, start, stop) entry per block."""
    layout = []
    offset = 0
    for i, (fan_in, fan_out) in enumerate(spec.layer_shapes()):
        size = fan_in * fan_out
        layout.append((f"w{i}", (fan_in, fan_out), offset, offset + size))
        offset += size
        layout.append((f"b{i}", (fan_out,), offset, offset + fan_out))
        offset += fan_out
    return tuple(layout)


@dataclass(frozen=True)
class ParamVector:
    """All weights and biases as one flat float64 vector."""

    values: np.ndarray
    layout: tuple

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        expected = self.layout[-1][3] if self.layout else 0
        if values.ndim != 1 or values.size != expected:
            raise DimensionMismatch(
                f"parameter vector has {values.size} entries, layout expects {expected}"
            )
        if not np.isfinite(values).all():
            raise NonFiniteParams("parameter vector contains non-finite entries")
        object.__setattr__(self, "values", values)

    def block(self, name: str) -> np.ndarray:
        for block_name, shape, start, stop in self.layout:
            if block_name == name:
                return self.values[start:stop].reshape(shape)
        raise KeyError(name)

    def replace_values(self, values: np.ndarray) -> "ParamVector":
        return ParamVector(values=values, layout=self.layout)


def init_params(spec: ModelSpec, seed: int) -> ParamVector:
    """Seeded symmetric-uniform weights, zero biases.

    Each weight block draws from uniform(-r, r) with
    r = sqrt(6 / (fan_in + fan_out)); biases start at zero.
    """
    rng = spawn_rng(seed, _TAG_INIT)
    layout = param_layout(spec)
    values = np.zeros(layout[-1][3])
    for name, shape, start, stop in layout:
        if name.startswith("w"):
            fan_in, fan_out = shape
            r = np.sqrt(6.0 / (fan_in + fan_out))
            values[start:stop] = rng.uniform(-r, r, size=stop - start)
    return ParamVector(values=values, layout=layout)


def _unpack(spec: ModelSpec, params: ParamVector):
    layers = []
    for i in range(len(spec.layer_shapes())):
        layers.append((params.block(f"w{i}"), params.block(f"b{i}")))
    return layers


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activate_grad(kind: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    return 1.0 - a**2


def _check_inputs(spec: ModelSpec, params: ParamVector, features) -> np.ndarray:
    X = as_float_matrix(features, "features")
    if X.shape[1] != spec.input_dim:
        raise DimensionMismatch(
            f"features have {X.shape[1]} columns, spec expects {spec.input_dim}"
        )
    if not np.isfinite(params.values).all():
        raise NonFiniteParams("parameter vector contains non-finite entries")
    return X


def _forward_pass(spec: ModelSpec, params: ParamVector, X: np.ndarray):
    layers = _unpack(spec, params)
    activations = [X]
    pre_acts = []
    h = X
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        pre_acts.append(z)
        if i < len(layers) - 1:
            h = _activate(spec.activation, z)
            activations.append(h)
    z_out = pre_acts[-1][:, 0]
    if spec.output == "probability":
        pred = _sigmoid(z_out)
    else:
        pred = z_out
    return pred, activations, pre_acts


def forward(spec: ModelSpec, params: ParamVector, features) -> np.ndarray:
    """Predictions for a batch of feature rows."""
    X = _check_inputs(spec, params, features)
    pred, _, _ = _forward_pass(spec, params, X)
    return pred


def backprop(spec: ModelSpec, params: ParamVector, features, d_pred) -> np.ndarray:
    """Flat gradient of sum(d_pred * prediction) with respect to the parameters.

    ``d_pred`` is the upstream derivative per row; any scalar loss of the
    predictions reduces to this vector-Jacobian product.
    """
    X = _check_inputs(spec, params, features)
    d_pred = as_float_vector(d_pred, "d_pred")
    pred, activations, pre_acts = _forward_pass(spec, params, X)
    return _backprop_from_cache(spec, params, d_pred, pred, activations, pre_acts)


def _backprop_from_cache(spec, params, d_pred, pred, activations, pre_acts) -> np.ndarray:
    layers = _unpack(spec, params)
    if spec.output == "probability":
        dz = d_pred * pred * (1.0 - pred)
    else:
        dz = d_pred
    grad = np.zeros_like(params.values)
    layout = params.layout
    delta = dz[:, None]
    for i in reversed(range(len(layers))):
        w, _ = layers[i]
        gw = activations[i].T @ delta
        gb = delta.sum(axis=0)
        for name, _, start, stop in layout:
            if name == f"w{i}":
                grad[start:stop] = gw.ravel()
            elif name == f"b{i}":
                grad[start:stop] = gb
        if i > 0:
            upstream = delta @ w.T
            delta = upstream * _activate_grad(
                spec.activation, pre_acts[i - 1], activations[i]
            )
    return grad


def loss_value(pred: np.ndarray, labels: np.ndarray, loss: str) -> float:
    loss = canonical_loss(loss)
    if loss == "mse":
        diff = pred - labels
        return float(diff @ diff) / pred.size
    p = np.clip(pred, _PROB_CLIP, 1.0 - _PROB_CLIP)
    return float(-(labels @ np.log(p) + (1.0 - labels) @ np.log1p(-p)) / pred.size)


def loss_grad_wrt_pred(pred: np.ndarray, labels: np.ndarray, loss: str) -> np.ndarray:
    loss = canonical_loss(loss)
    n = pred.size
    if loss == "mse":
        return 2.0 * (pred - labels) / n
    p = np.clip(pred, _PROB_CLIP, 1.0 - _PROB_CLIP)
    return (p - labels) / (p * (1.0 - p)) / n


def loss_and_grad(spec: ModelSpec, params: ParamVector, features, labels, loss: str):
    """Loss value and its analytic parameter gradient.

    Binary cross-entropy requires a probability output and labels in
    [0, 1]; probabilities are clipped away from 0 and 1 inside the loss.
    """
    loss = canonical_loss(loss)
    X = _check_inputs(spec, params, features)
    y = as_float_vector(labels, "labels")
    if y.size != X.shape[0]:
        raise DimensionMismatch("labels and features row counts differ")
    if loss == "binary_cross_entropy":
        if spec.output != "probability":
            raise ValueError("binary_cross_entropy requires a probability output")
        if y.min() < 0.0 or y.max() > 1.0:
            raise ValueError("binary_cross_entropy labels must lie in [0, 1]")
    pred, activations, pre_acts = _forward_pass(spec, params, X)
    value = loss_value(pred, y, loss)
    d_pred = loss_grad_wrt_pred(pred, y, loss)
    grad = _backprop_from_cache(spec, params, d_pred, pred, activations, pre_acts)
    return value, params.replace_values(grad)


def predict_error(spec: ModelSpec, params: ParamVector, features, labels) -> np.ndarray:
    """Prediction errors: predictions minus observed labels."""
    y = as_float_vector(labels, "labels")
    pred = forward(spec, params, features)
    if y.size != pred.size:
        raise DimensionMismatch("labels and features row counts differ")
    return pred - y


def absorb_standardization(spec: ModelSpec, params: ParamVector,
                           mean: np.ndarray, scale: np.ndarray) -> ParamVector:
    """Fold a feature z-score into the first layer.

    A model trained on (x - mean) / scale becomes one that consumes raw
    features: w <- w / scale (row-wise), b <- b - (mean / scale) @ w.
    """
    values = params.values.copy()
    out = params.replace_values(values)
    w0 = out.block("w0")
    b0 = out.block("b0")
    w_raw = w0 / scale[:, None]
    b_raw = b0 - (mean / scale) @ w0
    for name, _, start, stop in params.layout:
        if name == "w0":
            values[start:stop] = w_raw.ravel()
        elif name == "b0":
            values[start:stop] = b_raw
    return params.replace_values(values)


def params_to_dict(spec: ModelSpec, params: ParamVector) -> dict:
    return {
        "architecture": spec.architecture,
        "input_dim": spec.input_dim,
        "hidden_dims": list(spec.hidden_dims),
        "activation": spec.activation,
        "output": spec.output,
        "values": params.values.tolist(),
    }


def params_from_dict(payload: dict):
    spec = ModelSpec(
        architecture=payload["architecture"],
        input_dim=int(payload["input_dim"]),
        hidden_dims=tuple(payload["hidden_dims"]),
        activation=payload["activation"],
        output=payload["output"],
    )
    params = ParamVector(
        values=np.asarray(payload["values"], dtype=np.float64),
        layout=param_layout(spec),
    )
    return spec, params


def save_params(spec: ModelSpec, params: ParamVector, path: str) -> None:
    from .util import atomic_write_text

    atomic_write_text(path, json.dumps(params_to_dict(spec, params)) + "\n")


def load_params(path: str):
    with open(path) as handle:
        return params_from_dict(json.load(handle))
