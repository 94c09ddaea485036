"""From-scratch sparse graph convolutional classifier.

Each hidden layer computes ReLU(A_hat @ H @ W + b) followed by inverted
dropout during training; a final graph convolution projects to class scores
and a row-wise softmax.  Gradients are analytic (no autodiff), training uses
full-batch Adam.  All math runs in float64; the sparse propagation product
goes through scipy.
"""

from __future__ import annotations

import copy
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .frames import LabelMap
from .features import FeatureMatrix
from .graph import NormalizedAdjacency

# 1-D boolean array, one entry per node; True = node contributes to the loss.
TrainMask = np.ndarray

_BGM_MAGIC = b"BGM1"
_LOG_CLAMP = 1e-12


class DivergenceError(RuntimeError):
    """Raised when activations, gradients or parameters stop being finite."""


@dataclass(frozen=True)
class GcnConfig:
    num_classes: int
    hidden_channels: tuple[int, ...] = (64, 128, 64)
    dropout_rate: float = 0.0
    l2_coeff: float = 0.0
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_channels", tuple(int(c) for c in self.hidden_channels))
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if not self.hidden_channels or min(self.hidden_channels) < 1:
            raise ValueError("hidden_channels must be a non-empty list of positive counts")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.l2_coeff < 0:
            raise ValueError("l2_coeff must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.seed < 2 ** 32:
            raise ValueError("seed must fit an unsigned 32-bit integer")


@dataclass
class GcnModel:
    """Parameters plus Adam state; dimension chain input_dim -> hidden -> C."""

    config: GcnConfig
    input_dim: int
    weights: list[np.ndarray] = field(repr=False)
    biases: list[np.ndarray] = field(repr=False)
    moment1_w: list[np.ndarray] = field(repr=False)
    moment2_w: list[np.ndarray] = field(repr=False)
    moment1_b: list[np.ndarray] = field(repr=False)
    moment2_b: list[np.ndarray] = field(repr=False)
    step: int = 0

    @property
    def layer_dims(self) -> list[int]:
        return [self.input_dim, *self.config.hidden_channels, self.config.num_classes]

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def clone(self) -> "GcnModel":
        return copy.deepcopy(self)


@dataclass
class GcnGradients:
    """d(loss)/d(parameter) for every weight and bias, plus the paired loss."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    loss: float
    probs: np.ndarray


def init_model(input_dim: int, config: GcnConfig,
               rng: np.random.Generator | None = None) -> GcnModel:
    """Glorot-uniform weights, zero biases, zero Adam moments."""
    if input_dim < 1:
        raise ValueError("input_dim must be >= 1")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    dims = [input_dim, *config.hidden_channels, config.num_classes]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return GcnModel(
        config=config,
        input_dim=input_dim,
        weights=weights,
        biases=biases,
        moment1_w=[np.zeros_like(w) for w in weights],
        moment2_w=[np.zeros_like(w) for w in weights],
        moment1_b=[np.zeros_like(b) for b in biases],
        moment2_b=[np.zeros_like(b) for b in biases],
    )


def _as_features(x) -> np.ndarray:
    if isinstance(x, FeatureMatrix):
        return x.data
    return np.asarray(x, dtype=np.float64)


def _as_flat_labels(labels, num_nodes: int) -> np.ndarray:
    if isinstance(labels, LabelMap):
        flat = labels.labels.ravel()
    else:
        flat = np.asarray(labels).ravel()
    if flat.size != num_nodes:
        raise ValueError(f"expected {num_nodes} labels, found {flat.size}")
    return flat


def _as_flat_mask(mask, num_nodes: int) -> np.ndarray:
    flat = np.asarray(getattr(mask, "selected", mask)).ravel()
    if flat.size != num_nodes or flat.dtype != np.bool_:
        raise ValueError("mask must be a boolean array with one entry per node")
    return flat


def softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def inverted_dropout(h: np.ndarray, rate: float,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Drop entries with probability ``rate`` and rescale survivors by 1/(1-rate).

    Returns (dropped activations, the applied scale array); the scale is what
    the backward pass multiplies by.  The rescaling keeps the expectation
    equal to the input.
    """
    keep = rng.random(h.shape) >= rate
    scale = keep / (1.0 - rate)
    return h * scale, scale


def _forward_cached(model: GcnModel, adj: NormalizedAdjacency, x: np.ndarray,
                    training: bool, rng: np.random.Generator | None):
    cfg = model.config
    if x.shape[0] != adj.num_nodes:
        raise ValueError(f"{x.shape[0]} feature rows for {adj.num_nodes} nodes")
    if x.shape[1] != model.input_dim:
        raise ValueError(f"model expects {model.input_dim} features, got {x.shape[1]}")
    use_dropout = training and cfg.dropout_rate > 0.0
    if use_dropout and rng is None:
        raise ValueError("training with dropout requires an rng")

    hidden_caches = []
    h = x
    for layer in range(model.num_layers - 1):
        agg = adj.matmul(h)
        z = agg @ model.weights[layer] + model.biases[layer]
        if not np.isfinite(z).all():
            raise DivergenceError(f"non-finite activations in layer {layer}")
        h = np.maximum(z, 0.0)
        if use_dropout:
            h, scale = inverted_dropout(h, cfg.dropout_rate, rng)
        else:
            scale = None
        hidden_caches.append((agg, z, scale))

    agg_out = adj.matmul(h)
    z_out = agg_out @ model.weights[-1] + model.biases[-1]
    if not np.isfinite(z_out).all():
        raise DivergenceError("non-finite activations in output layer")
    probs = softmax_rows(z_out)
    return probs, hidden_caches, agg_out


def forward(model: GcnModel, adj: NormalizedAdjacency, x,
            training: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
    """Per-node class probabilities, shape (N, num_classes); rows sum to 1."""
    probs, _, _ = _forward_cached(model, adj, _as_features(x), training, rng)
    return probs


def masked_loss(probs: np.ndarray, labels, mask, model: GcnModel,
                l2_coeff: float) -> float:
    """Mean cross-entropy over masked nodes plus l2_coeff * sum ||W||^2."""
    n = probs.shape[0]
    flat_labels = _as_flat_labels(labels, n)
    flat_mask = _as_flat_mask(mask, n)
    active = np.flatnonzero(flat_mask)
    if active.size == 0:
        raise ValueError("mask selects no nodes")
    targets = flat_labels[active]
    if targets.max() >= model.config.num_classes:
        raise ValueError("masked node label out of range")
    picked = probs[active, targets]
    data_term = float(-np.log(np.maximum(picked, _LOG_CLAMP)).mean())
    reg_term = float(l2_coeff * sum(float((w * w).sum()) for w in model.weights))
    return data_term + reg_term


def backward(model: GcnModel, adj: NormalizedAdjacency, x, labels, mask,
             config: GcnConfig, rng: np.random.Generator | None = None) -> GcnGradients:
    """Analytic gradients of the masked loss for every weight and bias.

    Runs the forward pass internally; when dropout is active the masks come
    from ``rng``, so seeding it identically to a paired :func:`forward` call
    reproduces the same masks.
    """
    features = _as_features(x)
    probs, hidden_caches, agg_out = _forward_cached(model, adj, features, True, rng)

    n = probs.shape[0]
    flat_labels = _as_flat_labels(labels, n)
    flat_mask = _as_flat_mask(mask, n)
    active = np.flatnonzero(flat_mask)
    if active.size == 0:
        raise ValueError("mask selects no nodes")
    targets = flat_labels[active]
    if targets.max() >= config.num_classes:
        raise ValueError("masked node label out of range")

    picked = probs[active, targets]
    loss = float(-np.log(np.maximum(picked, _LOG_CLAMP)).mean())
    loss += float(config.l2_coeff * sum(float((w * w).sum()) for w in model.weights))

    # Softmax + cross-entropy: dL/dz = (p - onehot(y)) / M on masked rows.
    dz = np.zeros_like(probs)
    dz[active] = probs[active]
    dz[active, targets] -= 1.0
    dz /= active.size

    grad_w = [None] * model.num_layers
    grad_b = [None] * model.num_layers
    adj_t = adj.matrix.T

    grad_w[-1] = agg_out.T @ dz + 2.0 * config.l2_coeff * model.weights[-1]
    grad_b[-1] = dz.sum(axis=0)
    dh = adj_t @ (dz @ model.weights[-1].T)

    for layer in range(model.num_layers - 2, -1, -1):
        agg, z, dropout_scale = hidden_caches[layer]
        if dropout_scale is not None:
            dh = dh * dropout_scale
        dz_hidden = dh * (z > 0)
        grad_w[layer] = agg.T @ dz_hidden + 2.0 * config.l2_coeff * model.weights[layer]
        grad_b[layer] = dz_hidden.sum(axis=0)
        if layer > 0:
            dh = adj_t @ (dz_hidden @ model.weights[layer].T)

    return GcnGradients(weights=grad_w, biases=grad_b, loss=loss, probs=probs)


def adam_step(model: GcnModel, gradients: GcnGradients, config: GcnConfig) -> GcnModel:
    """Bias-corrected Adam update, applied in place; increments the step counter."""
    for g in (*gradients.weights, *gradients.biases):
        if not np.isfinite(g).all():
            raise DivergenceError("non-finite gradients")
    b1, b2 = config.adam_beta1, config.adam_beta2
    model.step += 1
    t = model.step
    correction1 = 1.0 - b1 ** t
    correction2 = 1.0 - b2 ** t
    params = list(zip(model.weights, gradients.weights, model.moment1_w, model.moment2_w))
    params += list(zip(model.biases, gradients.biases, model.moment1_b, model.moment2_b))
    for param, grad, m1, m2 in params:
        m1 *= b1
        m1 += (1.0 - b1) * grad
        m2 *= b2
        m2 += (1.0 - b2) * grad * grad
        m_hat = m1 / correction1
        v_hat = m2 / correction2
        param -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_epsilon)
        if not np.isfinite(param).all():
            raise DivergenceError("parameters diverged during the Adam update")
    return model


def masked_accuracy(probs: np.ndarray, labels, mask) -> float:
    """Fraction of masked nodes whose argmax matches the label."""
    n = probs.shape[0]
    flat_labels = _as_flat_labels(labels, n)
    active = np.flatnonzero(_as_flat_mask(mask, n))
    if active.size == 0:
        raise ValueError("mask selects no nodes")
    predicted = probs[active].argmax(axis=1)
    return float((predicted == flat_labels[active]).mean())


def save_checkpoint(model: GcnModel, path: str | Path) -> None:
    """BGM1 checkpoint: config block (u32/f64 fields) + f32 parameters per layer.

    Adam moment buffers are not persisted; a loaded model starts with fresh
    moments.  Save -> load -> save is byte-identical.
    """
    cfg = model.config
    with open(path, "wb") as fh:
        fh.write(_BGM_MAGIC)
        fh.write(struct.pack("<IIII", 1, model.num_layers, model.input_dim, cfg.num_classes))
        fh.write(struct.pack("<I", len(cfg.hidden_channels)))
        fh.write(struct.pack(f"<{len(cfg.hidden_channels)}I", *cfg.hidden_channels))
        fh.write(struct.pack("<6d", cfg.dropout_rate, cfg.l2_coeff, cfg.learning_rate,
                             cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon))
        fh.write(struct.pack("<II", cfg.seed, model.step))
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> GcnModel:
    with open(path, "rb") as fh:
        if fh.read(4) != _BGM_MAGIC:
            raise ValueError(f"not a BGM1 checkpoint: {path}")
        version, num_layers, input_dim, num_classes = struct.unpack("<IIII", fh.read(16))
        if version != 1:
            raise ValueError(f"unsupported checkpoint version {version}")
        (num_hidden,) = struct.unpack("<I", fh.read(4))
        hidden = struct.unpack(f"<{num_hidden}I", fh.read(4 * num_hidden))
        dropout, l2, lr, b1, b2, eps = struct.unpack("<6d", fh.read(48))
        seed, step = struct.unpack("<II", fh.read(8))
        if num_layers != num_hidden + 1:
            raise ValueError("layer count does not match hidden channel list")
        config = GcnConfig(num_classes=num_classes, hidden_channels=hidden,
                           dropout_rate=dropout, l2_coeff=l2, learning_rate=lr,
                           adam_beta1=b1, adam_beta2=b2, adam_epsilon=eps, seed=seed)
        dims = [input_dim, *hidden, num_classes]
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w = np.frombuffer(fh.read(4 * fan_in * fan_out), dtype="<f4")
            weights.append(w.astype(np.float64).reshape(fan_in, fan_out))
            b = np.frombuffer(fh.read(4 * fan_out), dtype="<f4")
            biases.append(b.astype(np.float64))
    model = GcnModel(
        config=config,
        input_dim=input_dim,
        weights=weights,
        biases=biases,
        moment1_w=[np.zeros_like(w) for w in weights],
        moment2_w=[np.zeros_like(w) for w in weights],
        moment1_b=[np.zeros_like(b) for b in biases],
        moment2_b=[np.zeros_like(b) for b in biases],
        step=step,
    )
    return model
