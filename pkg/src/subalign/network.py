"""Small feed-forward classifier with an exposed bottleneck activation.

Layer layout for dims (d0, d1, ..., dL): every layer up to the penultimate
one applies a rectifier, the layer producing the bottleneck (the input of
the final layer) is linear, and the final layer emits raw logits.  The
bottleneck is the single activation the discrepancy loss adapts; its
gradient is injected during backpropagation alongside the cross-entropy
path.  Backprop is exact for the joint objective

    ce(source) + lambda * lmmd(bottleneck_s, bottleneck_t)

with the pseudo-label weights and kernel bandwidth treated as constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ValidationError

_LOG_CLAMP = 1e-12


@dataclass
class MlpModel:
    layer_dims: tuple[int, ...]
    seed: int
    weights: list[np.ndarray]  # weights[l] has shape (dims[l], dims[l+1])
    biases: list[np.ndarray]   # biases[l] has shape (dims[l+1],)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def class_count(self) -> int:
        return self.layer_dims[-1]


@dataclass
class ForwardTrace:
    inputs: list[np.ndarray]  # inputs[l] is the input to weight layer l
    pre: list[np.ndarray]     # pre[l] = inputs[l] @ W[l] + b[l]
    bottleneck: np.ndarray    # input to the final layer
    logits: np.ndarray
    probs: np.ndarray


def mlp_init(layer_dims, seed: int) -> MlpModel:
    """Uniform Glorot init: half-width sqrt(6/(fan_in+fan_out)), zero biases."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2:
        raise ConfigurationError("layer_dims needs at least input and output sizes")
    if any(d < 1 for d in dims):
        raise ConfigurationError(f"layer dims must be >= 1, got {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims, dims[1:]):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(layer_dims=dims, seed=int(seed), weights=weights, biases=biases)


def parameter_count(model: MlpModel) -> int:
    return sum(w.size + b.size for w, b in zip(model.weights, model.biases))


def forward(model: MlpModel, X) -> ForwardTrace:
    """Full forward pass; softmax uses per-row max subtraction."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ValidationError(
            f"input must be (n, {model.input_dim}), got shape {X.shape}"
        )
    if not np.all(np.isfinite(X)):
        raise ValidationError("input contains non-finite values")
    L = model.n_layers
    inputs, pre = [X], []
    a = X
    for l in range(L):
        z = a @ model.weights[l] + model.biases[l]
        pre.append(z)
        if l == L - 1:
            break
        a = np.maximum(z, 0.0) if l <= L - 3 else z  # last pre-logits layer is linear
        inputs.append(a)
    logits = pre[-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    return ForwardTrace(
        inputs=inputs, pre=pre, bottleneck=inputs[-1], logits=logits, probs=probs
    )


def cross_entropy(probs, onehot) -> float:
    """Mean negative log-likelihood with the log argument clamped at 1e-12."""
    probs = np.asarray(probs, dtype=np.float64)
    onehot = np.asarray(onehot, dtype=np.float64)
    if probs.shape != onehot.shape:
        raise ValidationError(
            f"shape mismatch: probs {probs.shape}, onehot {onehot.shape}"
        )
    if not (np.all((onehot == 0) | (onehot == 1)) and np.all(onehot.sum(axis=1) == 1)):
        raise ValidationError("onehot rows must contain a single 1")
    return float(
        -(onehot * np.log(np.maximum(probs, _LOG_CLAMP))).sum() / probs.shape[0]
    )


def backward(
    model: MlpModel,
    trace_s: ForwardTrace,
    onehot_s,
    lmmd_grad_s,
    trace_t: ForwardTrace | None,
    lmmd_grad_t,
    lam: float,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Exact parameter gradients of ce(source) + lam * discrepancy.

    The source path carries the cross-entropy gradient plus lam times the
    supplied discrepancy gradient at the bottleneck; the target path carries
    only the bottleneck term (target soft labels are constants, so nothing
    flows through the target logits).
    """
    onehot_s = np.asarray(onehot_s, dtype=np.float64)
    if onehot_s.shape != trace_s.probs.shape:
        raise ValidationError("onehot shape does not match source probs")
    n_s = trace_s.probs.shape[0]
    dlogits_s = (trace_s.probs - onehot_s) / n_s
    dbn_s = _scaled_bottleneck_grad(lam, lmmd_grad_s, trace_s)
    dW, db = _backprop_path(model, trace_s, dlogits_s, dbn_s)
    dbn_t = None
    if trace_t is not None:
        dbn_t = _scaled_bottleneck_grad(lam, lmmd_grad_t, trace_t)
    if dbn_t is not None:
        dWt, dbt = _backprop_path(
            model, trace_t, np.zeros_like(trace_t.logits), dbn_t
        )
        for l in range(model.n_layers):
            dW[l] += dWt[l]
            db[l] += dbt[l]
    return dW, db


def _scaled_bottleneck_grad(lam, grad, trace):
    if lam == 0.0 or grad is None:
        return None
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != trace.bottleneck.shape:
        raise ValidationError(
            f"bottleneck grad shape {grad.shape} != activation shape "
            f"{trace.bottleneck.shape}"
        )
    return lam * grad


def _backprop_path(model, trace, dlogits, dbottleneck):
    L = model.n_layers
    dW = [None] * L
    db = [None] * L
    delta = dlogits  # gradient w.r.t. pre[l] while walking backward
    for l in range(L - 1, -1, -1):
        dW[l] = trace.inputs[l].T @ delta
        db[l] = delta.sum(axis=0)
        if l == 0:
            break
        dinput = delta @ model.weights[l].T
        if l == L - 1 and dbottleneck is not None:
            dinput = dinput + dbottleneck
        if l - 1 <= L - 3:
            delta = dinput * (trace.pre[l - 1] > 0)  # rectifier mask
        else:
            delta = dinput  # bottleneck layer is linear
    return dW, db


def save_model(model: MlpModel, path) -> None:
    """Binary save with a header carrying layer_dims and seed; bit-exact."""
    arrays = {
        "layer_dims": np.asarray(model.layer_dims, dtype=np.int64),
        "seed": np.asarray([model.seed], dtype=np.int64),
    }
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"W{l}"] = w
        arrays[f"b{l}"] = b
    np.savez(path, **arrays)


def load_model(path) -> MlpModel:
    with np.load(path) as data:
        dims = tuple(int(d) for d in data["layer_dims"])
        seed = int(data["seed"][0])
        weights = [data[f"W{l}"] for l in range(len(dims) - 1)]
        biases = [data[f"b{l}"] for l in range(len(dims) - 1)]
    return MlpModel(layer_dims=dims, seed=seed, weights=weights, biases=biases)
