"""Feedforward network with manual backpropagation.

Hidden layers apply an elementwise activation (ReLU by default; sigmoid is
available as a curvature negative control) followed, during training only,
by inverted dropout. The final layer is always a plain linear projection;
softmax lives in the loss, not the network.

Weights follow the column-vector convention W: (fan_out, fan_in), so a
single example maps z -> W z + b and a batch maps Z = X W^T + b.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .losses import CorrectedLoss


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_grad(z):
    # Subgradient at the kink fixed to 0.
    return (z > 0.0).astype(np.float64)


def _sigmoid_grad(z):
    s = expit(z)
    return s * (1.0 - s)


ACTIVATIONS = {
    "relu": (_relu, _relu_grad),
    "sigmoid": (expit, _sigmoid_grad),
}


@dataclass
class MlpNetwork:
    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    dropout_prob: float = 0.0
    activation: str = "relu"
    init_spec: dict | None = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        self.layer_dims = dims
        if len(dims) < 2:
            raise ValueError("need at least input and output dimensions")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("one weight matrix and bias vector per layer required")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i + 1], dims[i]):
                raise ValueError(f"layer {i}: weight shape {w.shape} != {(dims[i + 1], dims[i])}")
            if b.shape != (dims[i + 1],):
                raise ValueError(f"layer {i}: bias shape {b.shape} != {(dims[i + 1],)}")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise ValueError("dropout_prob must be in [0, 1)")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def class_count(self) -> int:
        return self.layer_dims[-1]

    def copy(self) -> "MlpNetwork":
        return MlpNetwork(
            self.layer_dims,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.dropout_prob,
            self.activation,
            dict(self.init_spec) if self.init_spec else None,
        )

    def parameters(self) -> list[np.ndarray]:
        return self.weights + self.biases


def init_network(
    layer_dims,
    init: str = "he_relu",
    seed: int = 0,
    dropout_prob: float = 0.0,
    activation: str = "relu",
) -> MlpNetwork:
    """Create a network with seeded weights and zero biases.

    he_relu draws each weight from Normal(0, sqrt(2 / fan_in));
    uniform_pm_0.05 draws from Uniform(-0.05, 0.05).
    """
    dims = tuple(int(d) for d in layer_dims)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        if init == "he_relu":
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
        elif init == "uniform_pm_0.05":
            w = rng.uniform(-0.05, 0.05, size=(fan_out, fan_in))
        else:
            raise ValueError(f"unknown init {init!r}")
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return MlpNetwork(
        dims, weights, biases, dropout_prob, activation,
        init_spec={"scheme": init, "seed": int(seed)},
    )


@dataclass
class ForwardCache:
    inputs: np.ndarray
    pre_activations: list[np.ndarray]
    hidden: list[np.ndarray]
    masks: list[np.ndarray | None]


def forward_batch(
    net: MlpNetwork,
    x: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Run a batch (n, d0) through the network; returns (logits, cache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.layer_dims[0]:
        raise ValueError(f"input shape {x.shape} does not match d0={net.layer_dims[0]}")
    act, _ = ACTIVATIONS[net.activation]
    use_dropout = training and net.dropout_prob > 0.0
    if use_dropout and rng is None:
        raise ValueError("dropout during training requires an rng")

    a = x
    pre, hidden, masks = [], [], []
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        pre.append(z)
        if i == last:
            a = z
        else:
            a = act(z)
            if use_dropout:
                keep = 1.0 - net.dropout_prob
                mask = (rng.random(a.shape) < keep) / keep
                a = a * mask
                masks.append(mask)
            else:
                masks.append(None)
            hidden.append(a)
    return a, ForwardCache(x, pre, hidden, masks)


def forward(
    net: MlpNetwork,
    x: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Single-example forward pass; returns (logits vector, cache)."""
    logits, cache = forward_batch(net, np.asarray(x, dtype=np.float64)[None, :], training, rng)
    return logits[0], cache


def backward_batch(
    net: MlpNetwork, cache: ForwardCache, grad_logits: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Backpropagate loss gradients through the cached forward pass.

    `grad_logits` holds one row per example; returned gradients are summed
    over the batch (callers scale rows beforehand for a mean loss).
    """
    grad_logits = np.asarray(grad_logits, dtype=np.float64)
    if grad_logits.ndim == 1:
        grad_logits = grad_logits[None, :]
    _, act_grad = ACTIVATIONS[net.activation]

    weight_grads = [None] * len(net.weights)
    bias_grads = [None] * len(net.biases)
    delta = grad_logits
    for i in range(len(net.weights) - 1, -1, -1):
        a_prev = cache.inputs if i == 0 else cache.hidden[i - 1]
        weight_grads[i] = delta.T @ a_prev
        bias_grads[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ net.weights[i]
            delta = delta * act_grad(cache.pre_activations[i - 1])
            if cache.masks[i - 1] is not None:
                delta = delta * cache.masks[i - 1]
    return weight_grads, bias_grads


def backward(net, cache, grad_logits):
    """Alias of backward_batch for the single-example calling convention."""
    return backward_batch(net, cache, grad_logits)


def parameter_count(net: MlpNetwork) -> int:
    return sum(p.size for p in net.parameters())


def flatten_params(net: MlpNetwork) -> np.ndarray:
    """All parameters as one vector: weights first, then biases, C order."""
    return np.concatenate([p.ravel() for p in net.parameters()])


def assign_params(net: MlpNetwork, flat: np.ndarray) -> None:
    flat = np.asarray(flat, dtype=np.float64)
    if flat.shape != (parameter_count(net),):
        raise ValueError("parameter vector has wrong length")
    offset = 0
    for p in net.parameters():
        p[...] = flat[offset : offset + p.size].reshape(p.shape)
        offset += p.size


def _flat_view_network(net: MlpNetwork) -> tuple[np.ndarray, MlpNetwork]:
    """A copy of `net` whose parameter arrays alias one flat buffer."""
    theta = flatten_params(net)
    weights, biases = [], []
    offset = 0
    for w in net.weights:
        weights.append(theta[offset : offset + w.size].reshape(w.shape))
        offset += w.size
    for b in net.biases:
        biases.append(theta[offset : offset + b.size].reshape(b.shape))
        offset += b.size
    view = MlpNetwork(net.layer_dims, weights, biases, net.dropout_prob, net.activation)
    return theta, view


def hessian_probe(
    net: MlpNetwork,
    x: np.ndarray,
    y: int,
    loss_a: CorrectedLoss,
    loss_b: CorrectedLoss,
    parameter_subset,
    step: float = 1e-4,
    y_b: int | None = None,
) -> float:
    """Max |H_a - H_b| over a finite-difference Hessian block.

    `parameter_subset` holds flat indices (see flatten_params ordering); both
    losses are probed on the identical stencil so shared curvature cancels.
    `y_b` lets the second loss use a different (e.g. flipped) label. Dropout
    is disabled: the probe runs in inference mode.
    """
    idx = np.asarray(parameter_subset, dtype=np.int64)
    if idx.size == 0 or idx.size > 50:
        raise ValueError("parameter subset must select between 1 and 50 parameters")
    if len(np.unique(idx)) != idx.size:
        raise ValueError("parameter subset must not repeat indices")
    x = np.asarray(x, dtype=np.float64)[None, :]
    if y_b is None:
        y_b = y
    theta, view = _flat_view_network(net)
    labels = (np.array([y]), np.array([y_b]))

    def losses_at() -> tuple[float, float]:
        logits, _ = forward_batch(view, x, training=False)
        va = loss_a.batch_evaluate(labels[0], logits)[0][0]
        vb = loss_b.batch_evaluate(labels[1], logits)[0][0]
        return va, vb

    k = idx.size
    h = step
    f0 = losses_at()
    diff = 0.0
    for a in range(k):
        ia = idx[a]
        theta[ia] += h
        fp = losses_at()
        theta[ia] -= 2 * h
        fm = losses_at()
        theta[ia] += h
        daa = ((fp[0] - 2 * f0[0] + fm[0]) - (fp[1] - 2 * f0[1] + fm[1])) / (h * h)
        diff = max(diff, abs(daa))
        for b in range(a + 1, k):
            ib = idx[b]
            theta[ia] += h
            theta[ib] += h
            fpp = losses_at()
            theta[ib] -= 2 * h
            fpm = losses_at()
            theta[ia] -= 2 * h
            fmm = losses_at()
            theta[ib] += 2 * h
            fmp = losses_at()
            theta[ia] += h
            theta[ib] -= h
            dab_a = (fpp[0] - fpm[0] - fmp[0] + fmm[0]) / (4 * h * h)
            dab_b = (fpp[1] - fpm[1] - fmp[1] + fmm[1]) / (4 * h * h)
            diff = max(diff, abs(dab_a - dab_b))
    return diff


def save_checkpoint(net: MlpNetwork, path) -> None:
    """Serialize to JSON; floats round-trip bit-exactly via repr."""
    doc = {
        "format": "noisecorr-checkpoint-v1",
        "layer_dims": list(net.layer_dims),
        "activation": net.activation,
        "dropout_prob": net.dropout_prob,
        "init": net.init_spec,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def load_checkpoint(path) -> MlpNetwork:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("format") != "noisecorr-checkpoint-v1":
        raise ValueError(f"not a checkpoint file: {path}")
    return MlpNetwork(
        tuple(doc["layer_dims"]),
        [np.array(w, dtype=np.float64) for w in doc["weights"]],
        [np.array(b, dtype=np.float64) for b in doc["biases"]],
        doc.get("dropout_prob", 0.0),
        doc.get("activation", "relu"),
        doc.get("init"),
    )
