"""Dense feed-forward network with exact backpropagation.

The network is a stack of affine layers with ReLU on every hidden layer and
either an identity output (regression) or a logistic output (the offline
classifier baseline). All arithmetic is float64.

Checkpoint layout (both the JSON and the ``.npz`` form carry the same fields,
in this order):

    format        "edgereplay-mlp/1"
    dims          [n_in, h_1, ..., n_out]
    hidden        "relu"
    output        "identity" | "logistic"
    weights       per layer, row-major [out_dim][in_dim]
    biases        per layer, [out_dim]
    optimizer     optional: {"mode", "lr", ...hyperparameters,
                   "step", accumulator arrays per layer}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

CHECKPOINT_FORMAT = "edgereplay-mlp/1"
OUTPUT_ACTIVATIONS = ("identity", "logistic")
BCE_EPS = 1e-7


class ShapeError(ValueError):
    """Input or parameter shapes do not match the model."""


@dataclass
class LayerParams:
    weights: np.ndarray  # (out_dim, in_dim)
    biases: np.ndarray  # (out_dim,)

    def copy(self) -> "LayerParams":
        return LayerParams(self.weights.copy(), self.biases.copy())


# Gradients and optimizer accumulators share the parameter layout.
Gradients = list[LayerParams]


@dataclass
class MlpModel:
    layers: list[LayerParams]
    output_activation: str = "identity"
    hidden_activation: str = field(default="relu", init=False)

    def __post_init__(self) -> None:
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        if not self.layers:
            raise ShapeError("model needs at least one layer")
        for prev, layer in zip(self.layers, self.layers[1:]):
            if layer.weights.shape[1] != prev.weights.shape[0]:
                raise ShapeError(
                    f"layer input dim {layer.weights.shape[1]} does not match "
                    f"previous output dim {prev.weights.shape[0]}"
                )
        for layer in self.layers:
            if layer.biases.shape != (layer.weights.shape[0],):
                raise ShapeError("bias length must equal the layer's output dim")

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].weights.shape[1]] + [l.weights.shape[0] for l in self.layers]

    @property
    def n_inputs(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.layers[-1].weights.shape[0]

    @property
    def n_params(self) -> int:
        return sum(l.weights.size + l.biases.size for l in self.layers)

    def copy(self) -> "MlpModel":
        return MlpModel([l.copy() for l in self.layers], self.output_activation)

    def parameters(self) -> list[np.ndarray]:
        """Flat list of parameter arrays: W1, b1, W2, b2, ..."""
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.biases)
        return out

    def to_vector(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])


def init_mlp(
    dims: Sequence[int],
    rng: np.random.Generator | int | None = None,
    output_activation: str = "identity",
) -> MlpModel:
    """He-uniform weights (bound sqrt(6 / fan_in)) and zero biases."""
    if len(dims) < 2:
        raise ShapeError("dims must list at least input and output sizes")
    rng = np.random.default_rng(rng)
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = math.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append(LayerParams(w, np.zeros(fan_out)))
    return MlpModel(layers, output_activation)


def zeros_like_params(model: MlpModel) -> Gradients:
    return [LayerParams(np.zeros_like(l.weights), np.zeros_like(l.biases)) for l in model.layers]


def _as_batch(model: MlpModel, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.n_inputs:
        raise ShapeError(f"expected input of width {model.n_inputs}, got shape {x.shape}")
    return x, single


def _logistic(z: np.ndarray) -> np.ndarray:
    # split by sign so large |z| never overflows exp
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(model: MlpModel, x) -> np.ndarray:
    """Network output for one input vector (returns shape (n_o,)) or a batch (n, n_o)."""
    a, single = _as_batch(model, x)
    last = len(model.layers) - 1
    for i, layer in enumerate(model.layers):
        z = a @ layer.weights.T + layer.biases
        if i < last:
            a = np.maximum(z, 0.0)
        elif model.output_activation == "logistic":
            a = _logistic(z)
        else:
            a = z
    return a[0] if single else a


def predict(model: MlpModel, x) -> np.ndarray:
    """Scalar-output convenience: batch (n, n_i) -> (n,)."""
    out = forward(model, x)
    return out[..., 0] if model.n_outputs == 1 else out


def loss_mse(y: float, y_hat: float) -> float:
    return (y - y_hat) ** 2


def loss_bce(y: float, p: float) -> float:
    p = min(max(p, BCE_EPS), 1.0 - BCE_EPS)
    return -(y * math.log(p) + (1.0 - y) * math.log(1.0 - p))


def backward(model: MlpModel, x, y) -> tuple[float, Gradients]:
    """Batch-mean loss and its exact gradients.

    Loss is squared error averaged over outputs and samples for the identity
    head, and binary cross-entropy for the logistic head.
    """
    a0, _ = _as_batch(model, x)
    n = a0.shape[0]
    if n == 0:
        raise ValueError("backward needs a non-empty batch")
    y = np.asarray(y, dtype=np.float64).reshape(n, -1)
    if y.shape[1] != model.n_outputs:
        raise ShapeError(f"target width {y.shape[1]} != model outputs {model.n_outputs}")

    acts = [a0]
    zs = []
    last = len(model.layers) - 1
    a = a0
    for i, layer in enumerate(model.layers):
        z = a @ layer.weights.T + layer.biases
        zs.append(z)
        if i < last:
            a = np.maximum(z, 0.0)
        elif model.output_activation == "logistic":
            a = _logistic(z)
        else:
            a = z
        acts.append(a)

    out = acts[-1]
    if model.output_activation == "logistic":
        p = np.clip(out, BCE_EPS, 1.0 - BCE_EPS)
        loss = float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
        # logit gradient of BCE; the clamp only guards the log
        dz = (out - y) / (n * y.shape[1])
    else:
        diff = out - y
        loss = float(np.mean(diff * diff))
        dz = 2.0 * diff / (n * y.shape[1])

    grads: Gradients = [None] * len(model.layers)  # type: ignore[list-item]
    for i in range(last, -1, -1):
        grads[i] = LayerParams(dz.T @ acts[i], dz.sum(axis=0))
        if i > 0:
            # ReLU'(0) is taken as 0
            dz = (dz @ model.layers[i].weights) * (zs[i - 1] > 0.0)
    return loss, grads


class SgdMomentum:
    """theta_t = theta_{t-1} - lr * grad + momentum * (theta_{t-1} - theta_{t-2})."""

    mode = "sgd_momentum"

    def __init__(self, model: MlpModel, lr: float = 1e-3, momentum: float = 0.9):
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        self.lr = lr
        self.momentum = momentum
        self.step_count = 0
        self.prev_delta = zeros_like_params(model)

    def step(self, model: MlpModel, grads: Gradients) -> None:
        _check_shapes(model, grads)
        lr, mu = self.lr, self.momentum
        for layer, g, d in zip(model.layers, grads, self.prev_delta):
            for p, gp, dp in ((layer.weights, g.weights, d.weights), (layer.biases, g.biases, d.biases)):
                dp *= mu
                dp -= lr * gp
                p += dp
        self.step_count += 1

    def state_dict(self) -> dict:
        return {
            "mode": self.mode,
            "lr": self.lr,
            "momentum": self.momentum,
            "step": self.step_count,
            "prev_delta": [(d.weights, d.biases) for d in self.prev_delta],
        }


class Adam:
    """Adam with bias correction (defaults beta1=0.9, beta2=0.999, eps=1e-8)."""

    mode = "adam"

    def __init__(
        self,
        model: MlpModel,
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = zeros_like_params(model)
        self.v = zeros_like_params(model)

    def step(self, model: MlpModel, grads: Gradients) -> None:
        _check_shapes(model, grads)
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.step_count
        c2 = 1.0 - b2**self.step_count
        for layer, g, m, v in zip(model.layers, grads, self.m, self.v):
            for p, gp, mp, vp in (
                (layer.weights, g.weights, m.weights, v.weights),
                (layer.biases, g.biases, m.biases, v.biases),
            ):
                mp *= b1
                mp += (1.0 - b1) * gp
                vp *= b2
                vp += (1.0 - b2) * gp * gp
                p -= self.lr * (mp / c1) / (np.sqrt(vp / c2) + self.eps)

    def state_dict(self) -> dict:
        return {
            "mode": self.mode,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "step": self.step_count,
            "m": [(a.weights, a.biases) for a in self.m],
            "v": [(a.weights, a.biases) for a in self.v],
        }


OptimizerState = SgdMomentum | Adam


def sgd_momentum_step(model: MlpModel, opt: SgdMomentum, grads: Gradients) -> None:
    if opt.mode != "sgd_momentum":
        raise ValueError("optimizer is not in sgd_momentum mode")
    opt.step(model, grads)


def adam_step(model: MlpModel, opt: Adam, grads: Gradients) -> None:
    if opt.mode != "adam":
        raise ValueError("optimizer is not in adam mode")
    opt.step(model, grads)


def _check_shapes(model: MlpModel, grads: Gradients) -> None:
    if len(grads) != len(model.layers):
        raise ShapeError("gradient layer count does not match model")
    for layer, g in zip(model.layers, grads):
        if g.weights.shape != layer.weights.shape or g.biases.shape != layer.biases.shape:
            raise ShapeError("gradient shape does not match model parameters")


# -- checkpoints -------------------------------------------------------------


def _model_fields(model: MlpModel) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "dims": model.dims,
        "hidden": model.hidden_activation,
        "output": model.output_activation,
    }


def _layers_from(dims, weights, biases) -> list[LayerParams]:
    layers = []
    for k, (w, b) in enumerate(zip(weights, biases)):
        w = np.asarray(w, dtype=np.float64).reshape(dims[k + 1], dims[k])
        layers.append(LayerParams(w, np.asarray(b, dtype=np.float64).reshape(dims[k + 1])))
    return layers


def _accum_from(model: MlpModel, pairs) -> Gradients:
    return [
        LayerParams(
            np.asarray(w, dtype=np.float64).reshape(l.weights.shape),
            np.asarray(b, dtype=np.float64).reshape(l.biases.shape),
        )
        for l, (w, b) in zip(model.layers, pairs)
    ]


def _optimizer_from(model: MlpModel, d: dict) -> OptimizerState:
    if d["mode"] == "sgd_momentum":
        opt = SgdMomentum(model, d["lr"], d["momentum"])
        opt.prev_delta = _accum_from(model, d["prev_delta"])
    elif d["mode"] == "adam":
        opt = Adam(model, d["lr"], d["beta1"], d["beta2"], d["eps"])
        opt.m = _accum_from(model, d["m"])
        opt.v = _accum_from(model, d["v"])
    else:
        raise ValueError(f"unknown optimizer mode {d['mode']!r}")
    opt.step_count = int(d["step"])
    return opt


def save_checkpoint(path, model: MlpModel, opt: OptimizerState | None = None) -> None:
    """Write a checkpoint; ``.json`` suffix gives JSON, anything else ``.npz``."""
    path = Path(path)
    if path.suffix == ".json":
        doc = _model_fields(model)
        doc["weights"] = [l.weights.ravel().tolist() for l in model.layers]
        doc["biases"] = [l.biases.tolist() for l in model.layers]
        if opt is not None:
            sd = opt.state_dict()
            for key in ("prev_delta", "m", "v"):
                if key in sd:
                    sd[key] = [(w.ravel().tolist(), b.tolist()) for w, b in sd[key]]
            doc["optimizer"] = sd
        path.write_text(json.dumps(doc))
        return

    arrays: dict[str, np.ndarray] = {
        "meta": np.array(json.dumps(_model_fields(model))),
    }
    for k, l in enumerate(model.layers):
        arrays[f"w{k}"] = l.weights
        arrays[f"b{k}"] = l.biases
    if opt is not None:
        sd = opt.state_dict()
        scalars = {key: val for key, val in sd.items() if not isinstance(val, list)}
        arrays["opt_meta"] = np.array(json.dumps(scalars))
        for key in ("prev_delta", "m", "v"):
            for k, (w, b) in enumerate(sd.get(key, [])):
                arrays[f"{key}_w{k}"] = w
                arrays[f"{key}_b{k}"] = b
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[MlpModel, OptimizerState | None]:
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        if doc.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {doc.get('format')!r}")
        model = MlpModel(_layers_from(doc["dims"], doc["weights"], doc["biases"]), doc["output"])
        opt = _optimizer_from(model, doc["optimizer"]) if "optimizer" in doc else None
        return model, opt

    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {meta.get('format')!r}")
        n = len(meta["dims"]) - 1
        model = MlpModel(
            _layers_from(
                meta["dims"],
                [data[f"w{k}"] for k in range(n)],
                [data[f"b{k}"] for k in range(n)],
            ),
            meta["output"],
        )
        opt = None
        if "opt_meta" in data:
            sd = json.loads(str(data["opt_meta"]))
            for key in ("prev_delta", "m", "v"):
                if f"{key}_w0" in data:
                    sd[key] = [(data[f"{key}_w{k}"], data[f"{key}_b{k}"]) for k in range(n)]
            opt = _optimizer_from(model, sd)
    return model, opt
