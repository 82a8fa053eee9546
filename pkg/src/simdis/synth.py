"""Synthetic long-tailed multi-label data and two-view augmentation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from simdis.errors import ConfigurationError, DomainError
from simdis.labels import LabelSet


@dataclass(frozen=True)
class SynthSpec:
    num_classes: int = 20
    num_samples: int = 2000
    feature_dim: int = 32
    avg_labels: float = 2.5
    tail_exponent: float = 1.5
    noise_sigma: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        if self.num_classes < 1:
            raise ConfigurationError("num_classes must be positive")
        if self.num_samples < 2:
            raise ConfigurationError("num_samples must be at least 2")
        if self.feature_dim < 1:
            raise ConfigurationError("feature_dim must be positive")
        if not 1 <= self.avg_labels <= self.num_classes:
            raise ConfigurationError(
                f"avg_labels={self.avg_labels} infeasible for {self.num_classes} classes"
            )
        if self.tail_exponent < 0:
            raise ConfigurationError("tail_exponent must be non-negative")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be non-negative")


@dataclass
class Dataset:
    features: np.ndarray
    labels: list[LabelSet]
    class_prototypes: np.ndarray | None = None
    noise: np.ndarray | None = None

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def num_classes(self) -> int:
        return self.labels[0].universe_size

    def indicators(self) -> np.ndarray:
        return np.stack([y.indicator() for y in self.labels])

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.features[idx],
            [self.labels[i] for i in idx],
            self.class_prototypes,
            None if self.noise is None else self.noise[idx],
        )

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for x, y in zip(self.features, self.labels):
                fh.write(json.dumps({"features": x.tolist(), "labels": list(y)}) + "\n")

    @classmethod
    def from_jsonl(cls, path, num_classes: int | None = None) -> "Dataset":
        rows = []
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                rows.append((rec["features"], rec["labels"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DomainError(f"{path}:{lineno}: bad record ({exc})") from exc
        if not rows:
            raise DomainError(f"{path}: no records")
        size = num_classes or 1 + max(max(y) for _, y in rows if y)
        features = np.array([x for x, _ in rows], dtype=np.float64)
        return cls(features, [LabelSet.of(y, size) for _, y in rows])


def class_frequencies(num_classes: int, tail_exponent: float) -> np.ndarray:
    """Target class distribution proportional to ``rank ** -tail_exponent``."""
    ranks = np.arange(1, num_classes + 1, dtype=np.float64)
    p = ranks ** -tail_exponent
    return p / p.sum()


def _draw_without_replacement(rng, p, k):
    # Efraimidis-Spirakis keys give weighted sampling without replacement
    keys = rng.random(p.shape[0]) ** (1.0 / p)
    return np.argsort(-keys, kind="stable")[:k]


def generate(spec: SynthSpec) -> Dataset:
    """Sample a dataset whose features are noisy means of class prototypes.

    Label counts are ``1 + Binomial(L - 1, (avg_labels - 1) / (L - 1))`` so
    their expectation is exactly ``avg_labels``; classes are then drawn
    without replacement from the power-law class distribution.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    L = spec.num_classes
    protos = rng.normal(size=(L, spec.feature_dim))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    p = class_frequencies(L, spec.tail_exponent)

    if L == 1:
        counts = np.ones(spec.num_samples, dtype=np.int64)
    else:
        counts = 1 + rng.binomial(L - 1, (spec.avg_labels - 1) / (L - 1), size=spec.num_samples)

    labels, means = [], np.empty((spec.num_samples, spec.feature_dim))
    for i, k in enumerate(counts):
        chosen = _draw_without_replacement(rng, p, int(k))
        labels.append(LabelSet.of(chosen.tolist(), L))
        means[i] = protos[chosen].mean(axis=0)
    noise = rng.normal(scale=spec.noise_sigma, size=means.shape) if spec.noise_sigma else np.zeros_like(means)
    return Dataset(means + noise, labels, protos, noise)


def augment_views(features: np.ndarray, noise_sigma: float, rng: np.random.Generator):
    """Two independently noised copies of every row."""
    if noise_sigma < 0:
        raise ConfigurationError("noise_sigma must be non-negative")
    features = np.asarray(features, dtype=np.float64)
    if noise_sigma == 0:
        return features.copy(), features.copy()
    a = features + rng.normal(scale=noise_sigma, size=features.shape)
    b = features + rng.normal(scale=noise_sigma, size=features.shape)
    return a, b


def augment_pair(features_row, noise_sigma: float, seed: int):
    a, b = augment_views(np.asarray(features_row)[None, :], noise_sigma, np.random.default_rng(seed))
    return a[0], b[0]


def interleave_views(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rows ``a0, b0, a1, b1, ...`` so each sample's views are adjacent."""
    out = np.empty((2 * a.shape[0],) + a.shape[1:], dtype=a.dtype)
    out[0::2] = a
    out[1::2] = b
    return out


def spec_dict(spec: SynthSpec) -> dict:
    return asdict(spec)
