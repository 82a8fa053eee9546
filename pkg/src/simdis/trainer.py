"""Two-phase training: contrastive pre-training, then a frozen-encoder linear probe.

Everything is plain numpy with hand-written backpropagation.  All randomness
is drawn from generators keyed by ``(seed, purpose[, epoch])`` so the loss
strategy never influences initialisation, batch order or augmentation noise.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from simdis.errors import ConfigurationError, TrainingDiverged
from simdis.losses import ContrastiveBatch, Placement, Strategy, evaluate
from simdis.synth import Dataset, augment_views, interleave_views

# generator stream ids
_INIT, _ORDER, _AUGMENT, _PROBE_INIT, _PROBE_ORDER = range(5)


@dataclass
class TrainConfig:
    strategy: Strategy = field(default_factory=lambda: Strategy.simdis(Placement.INSIDE_LOG))
    temperature: float = 0.07
    epochs_contrastive: int = 60
    epochs_probe: int = 150
    batch_pairs: int = 64
    learning_rate: float = 0.01
    probe_learning_rate: float = 1.0
    momentum: float = 0.9
    warmup_fraction: float = 0.05
    weight_decay: float = 1e-4
    normalize_projection: bool = True
    hidden_dims: tuple[int, ...] = (64, 64)
    projection_dim: int = 32
    noise_sigma: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        if not self.temperature > 0:
            raise ConfigurationError("temperature must be positive")
        if not 0 <= self.warmup_fraction < 1:
            raise ConfigurationError("warmup_fraction must lie in [0, 1)")
        if self.epochs_contrastive < 0 or self.epochs_probe < 0:
            raise ConfigurationError("epoch counts must be non-negative")
        if self.batch_pairs < 1:
            raise ConfigurationError("batch_pairs must be positive")
        if self.learning_rate < 0 or self.probe_learning_rate < 0:
            raise ConfigurationError("learning rates must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ConfigurationError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be non-negative")
        if self.projection_dim < 1 or any(h < 1 for h in self.hidden_dims) or not self.hidden_dims:
            raise ConfigurationError("layer widths must be positive")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be non-negative")


@dataclass
class ModelParams:
    """Encoder layers, a two-layer projection head and an optional linear probe.

    Each layer is a ``(weight, bias)`` pair with ``weight`` of shape
    ``(fan_in, fan_out)``.  ReLU follows every encoder layer and the first
    projection layer.
    """

    encoder: list[tuple[np.ndarray, np.ndarray]]
    projection: list[tuple[np.ndarray, np.ndarray]]
    probe: tuple[np.ndarray, np.ndarray] | None = None

    def named(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, layers in (("encoder", self.encoder), ("projection", self.projection)):
            for k, (w, b) in enumerate(layers):
                out[f"{prefix}.{k}.weight"] = w
                out[f"{prefix}.{k}.bias"] = b
        if self.probe is not None:
            out["probe.weight"], out["probe.bias"] = self.probe
        return out

    @classmethod
    def from_named(cls, tensors: dict) -> "ModelParams":
        def layers(prefix):
            out, k = [], 0
            while f"{prefix}.{k}.weight" in tensors:
                out.append(
                    (
                        np.asarray(tensors[f"{prefix}.{k}.weight"], dtype=np.float64),
                        np.asarray(tensors[f"{prefix}.{k}.bias"], dtype=np.float64),
                    )
                )
                k += 1
            return out

        probe = None
        if "probe.weight" in tensors:
            probe = (
                np.asarray(tensors["probe.weight"], dtype=np.float64),
                np.asarray(tensors["probe.bias"], dtype=np.float64),
            )
        return cls(layers("encoder"), layers("projection"), probe)

    def copy(self) -> "ModelParams":
        return ModelParams.from_named({k: v.copy() for k, v in self.named().items()})


@dataclass
class TrainTrace:
    contrastive_loss: list[float] = field(default_factory=list)
    contrastive_lr: list[float] = field(default_factory=list)
    probe_loss: list[float] = field(default_factory=list)
    probe_lr: list[float] = field(default_factory=list)
    metrics: dict | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "phase", "loss", "lr"])
        for k, (loss, lr) in enumerate(zip(self.contrastive_loss, self.contrastive_lr), 1):
            w.writerow([k, "contrastive", repr(loss), repr(lr)])
        for k, (loss, lr) in enumerate(zip(self.probe_loss, self.probe_lr), 1):
            w.writerow([k, "probe", repr(loss), repr(lr)])
        return buf.getvalue()


def _rng(seed: int, stream: int, epoch: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, stream, epoch])


def _he_layer(rng, fan_in, fan_out):
    return rng.normal(scale=math.sqrt(2.0 / fan_in), size=(fan_in, fan_out)), np.zeros(fan_out)


def init_params(input_dim: int, config: TrainConfig) -> ModelParams:
    rng = _rng(config.seed, _INIT)
    dims = (input_dim,) + tuple(config.hidden_dims)
    encoder = [_he_layer(rng, a, b) for a, b in zip(dims[:-1], dims[1:])]
    h = dims[-1]
    projection = [_he_layer(rng, h, h), _he_layer(rng, h, config.projection_dim)]
    return ModelParams(encoder, projection)


def lr_at(step: int, total_steps: int, lr_max: float, warmup_fraction: float) -> float:
    """Linear warmup to ``lr_max`` over the first steps, then cosine decay to 0.

    With ``w = max(1, ceil(warmup_fraction * total_steps))`` warmup steps, step
    ``s < w`` uses ``lr_max * (s + 1) / w``; the peak falls on step ``w - 1``
    and the final step ``total_steps - 1`` reaches exactly 0.
    """
    w = max(1, math.ceil(warmup_fraction * total_steps))
    if step < w:
        return lr_max * (step + 1) / w
    span = total_steps - w
    progress = (step - w + 1) / span
    return lr_max * 0.5 * (1.0 + math.cos(math.pi * progress))


def encode(params: ModelParams, x: np.ndarray, keep: bool = False):
    """Encoder forward pass; with ``keep`` also returns every activation."""
    acts = [x]
    h = x
    for w, b in params.encoder:
        h = np.maximum(h @ w + b, 0.0)
        acts.append(h)
    return (h, acts) if keep else h


def project(params: ModelParams, h: np.ndarray, normalize: bool):
    (w1, b1), (w2, b2) = params.projection
    u1 = np.maximum(h @ w1 + b1, 0.0)
    u = u1 @ w2 + b2
    if not normalize:
        return u, (u1, u, None)
    norm = np.linalg.norm(u, axis=1, keepdims=True)
    norm = np.maximum(norm, 1e-12)
    return u / norm, (u1, u, norm)


def contrastive_objective(
    params: ModelParams,
    views: np.ndarray,
    labels,
    config: TrainConfig,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and its gradient with respect to every encoder/projection tensor."""
    h, acts = encode(params, views, keep=True)
    z, (u1, u, norm) = project(params, h, config.normalize_projection)
    batch = ContrastiveBatch(z, tuple(labels), config.temperature)
    report = evaluate(batch, config.strategy)
    dz = report.gradient

    if norm is None:
        du = dz
    else:
        du = (dz - z * (z * dz).sum(axis=1, keepdims=True)) / norm

    grads = {}
    (w1, _), (w2, _) = params.projection
    grads["projection.1.weight"] = u1.T @ du
    grads["projection.1.bias"] = du.sum(axis=0)
    du1 = (du @ w2.T) * (u1 > 0)
    grads["projection.0.weight"] = h.T @ du1
    grads["projection.0.bias"] = du1.sum(axis=0)
    dh = du1 @ w1.T
    for k in range(len(params.encoder) - 1, -1, -1):
        w, _ = params.encoder[k]
        da = dh * (acts[k + 1] > 0)
        grads[f"encoder.{k}.weight"] = acts[k].T @ da
        grads[f"encoder.{k}.bias"] = da.sum(axis=0)
        dh = da @ w.T
    return report.total, grads


class _SGD:
    def __init__(self, momentum, weight_decay):
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float):
        for name, g in grads.items():
            p = tensors[name]
            if self.weight_decay and name.endswith("weight"):
                g = g + self.weight_decay * p
            v = self.velocity.get(name)
            v = g.copy() if v is None else self.momentum * v + g
            self.velocity[name] = v
            p -= lr * v  # in place: tensors alias the model arrays


def _minibatches(n: int, size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    return [order[k : k + size] for k in range(0, n, size)]


def train_contrastive(
    dataset: Dataset,
    config: TrainConfig,
    on_step: Callable[[int, np.ndarray], None] | None = None,
) -> tuple[ModelParams, TrainTrace]:
    config.validate()
    params = init_params(dataset.features.shape[1], config)
    trace = TrainTrace()
    n = len(dataset)
    per_epoch = math.ceil(n / config.batch_pairs)
    total = per_epoch * config.epochs_contrastive
    opt = _SGD(config.momentum, config.weight_decay)
    tensors = params.named()
    step = 0
    for epoch in range(config.epochs_contrastive):
        batches = _minibatches(n, config.batch_pairs, _rng(config.seed, _ORDER, epoch))
        aug = _rng(config.seed, _AUGMENT, epoch)
        losses = []
        for idx in batches:
            a, b = augment_views(dataset.features[idx], config.noise_sigma, aug)
            views = interleave_views(a, b)
            labels = [dataset.labels[i] for i in idx for _ in (0, 1)]
            loss, grads = contrastive_objective(params, views, labels, config)
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite contrastive loss at epoch {epoch + 1}, step {step}", trace
                )
            if on_step is not None:
                on_step(step, idx)
            lr = lr_at(step, total, config.learning_rate, config.warmup_fraction)
            opt.step(tensors, grads, lr)
            losses.append(loss)
            step += 1
        trace.contrastive_loss.append(float(np.mean(losses)))
        trace.contrastive_lr.append(lr)
    return params, trace


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def bce_with_logits(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean binary cross-entropy over all (sample, label) cells."""
    return float(np.mean(np.maximum(logits, 0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))))


def init_probe(in_dim: int, num_classes: int, seed: int):
    rng = _rng(seed, _PROBE_INIT)
    return rng.normal(scale=1.0 / math.sqrt(in_dim), size=(in_dim, num_classes)), np.zeros(num_classes)


def train_probe(
    dataset: Dataset,
    encoder: ModelParams,
    config: TrainConfig,
    trace: TrainTrace | None = None,
) -> tuple[ModelParams, TrainTrace]:
    """Fit a linear BCE classifier on frozen encoder features of un-augmented inputs."""
    config.validate()
    trace = TrainTrace() if trace is None else trace
    h = encode(encoder, dataset.features)
    y = dataset.indicators().astype(np.float64)
    w, b = init_probe(h.shape[1], y.shape[1], config.seed)
    tensors = {"probe.weight": w, "probe.bias": b}
    opt = _SGD(config.momentum, config.weight_decay)
    n = len(dataset)
    size = 2 * config.batch_pairs
    total = math.ceil(n / size) * config.epochs_probe
    step = 0
    for epoch in range(config.epochs_probe):
        losses = []
        for idx in _minibatches(n, size, _rng(config.seed, _PROBE_ORDER, epoch)):
            logits = h[idx] @ w + b
            loss = bce_with_logits(logits, y[idx])
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite probe loss at epoch {epoch + 1}", trace)
            dlogits = (_sigmoid(logits) - y[idx]) / logits.size
            grads = {"probe.weight": h[idx].T @ dlogits, "probe.bias": dlogits.sum(axis=0)}
            lr = lr_at(step, total, config.probe_learning_rate, config.warmup_fraction)
            opt.step(tensors, grads, lr)
            losses.append(loss)
            step += 1
        trace.probe_loss.append(float(np.mean(losses)))
        trace.probe_lr.append(lr)
    model = ModelParams(encoder.encoder, encoder.projection, (w, b))
    return model, trace


def predict(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Probe probabilities for each sample and class."""
    if params.probe is None:
        raise ConfigurationError("model has no probe")
    w, b = params.probe
    return _sigmoid(encode(params, features) @ w + b)
