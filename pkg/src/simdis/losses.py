"""Multi-label supervised contrastive losses and their gradients.

Every strategy here shares one log-softmax over ``A(i) = I \\ {i}`` per anchor.
Writing ``G = Z Z^T / tau`` and ``lse_i`` for the log-sum-exp of row ``i`` over
``A(i)``, each loss has the form

    total = scale * sum_i [ -sum_a M[i, a] * G[i, a] + C[i] * lse_i + const_i ]

for a strategy-specific coefficient matrix ``M``, row weights ``C`` and a
constant that does not depend on the embeddings.  The gradient follows in
closed form: ``dtotal/dG = scale * (-M + C[:, None] * softmax)`` and
``dtotal/dZ = (dG + dG^T) Z / tau``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from simdis.errors import ConfigurationError, DomainError
from simdis.labels import (
    LabelSet,
    PenaltyKind,
    Reciprocal,
    indicator_matrix,
    penalty_from_dict,
)


@dataclass(frozen=True)
class ContrastiveBatch:
    """``2N`` projected embeddings, their label sets and a temperature.

    When ``normalized`` is set every row must have unit Euclidean norm.
    """

    embeddings: np.ndarray
    labels: tuple[LabelSet, ...]
    temperature: float = 0.07
    normalized: bool = False

    def __post_init__(self):
        z = np.asarray(self.embeddings, dtype=np.float64)
        if z.ndim != 2:
            raise DomainError("embeddings must be a 2-D matrix")
        object.__setattr__(self, "embeddings", z)
        object.__setattr__(self, "labels", tuple(self.labels))
        if z.shape[0] < 2:
            raise DomainError("a batch needs at least two samples")
        if z.shape[0] != len(self.labels):
            raise DomainError(f"{z.shape[0]} embeddings but {len(self.labels)} label sets")
        if not np.all(np.isfinite(z)):
            raise DomainError("embeddings must be finite")
        if not self.temperature > 0:
            raise ConfigurationError(f"temperature must be positive, got {self.temperature}")
        sizes = {y.universe_size for y in self.labels}
        if len(sizes) != 1:
            raise ConfigurationError("all label sets in a batch must share a universe")
        if self.normalized and not np.allclose(np.linalg.norm(z, axis=1), 1.0, rtol=0, atol=1e-9):
            raise DomainError("normalized batch has rows without unit norm")

    def __len__(self) -> int:
        return self.embeddings.shape[0]

    @property
    def universe_size(self) -> int:
        return self.labels[0].universe_size

    def with_embeddings(self, embeddings: np.ndarray) -> "ContrastiveBatch":
        return ContrastiveBatch(embeddings, self.labels, self.temperature)

    def to_json(self) -> str:
        return json.dumps(
            {
                "temperature": self.temperature,
                "universe_size": self.universe_size,
                "labels": [list(y) for y in self.labels],
                "embeddings": self.embeddings.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ContrastiveBatch":
        d = json.loads(text)
        labels = d["labels"]
        size = d.get("universe_size") or 1 + max(max(y) for y in labels)
        return cls(
            np.array(d["embeddings"], dtype=np.float64),
            tuple(LabelSet.of(y, size) for y in labels),
            float(d["temperature"]),
        )


class StrategyKind(enum.Enum):
    ALL = "ALL"
    ANY = "ANY"
    MULSUPCON = "MulSupCon"
    SIMDIS = "SimDis"


class Placement(enum.Enum):
    INSIDE_LOG = "inside"
    OUTSIDE_LOG = "outside"
    TEMPERATURE_SCALED = "temperature"


@dataclass(frozen=True)
class Strategy:
    kind: StrategyKind
    placement: Placement | None = None
    penalty: PenaltyKind | None = None

    def __post_init__(self):
        if self.kind is StrategyKind.SIMDIS:
            if self.placement is None:
                object.__setattr__(self, "placement", Placement.INSIDE_LOG)
            if self.penalty is None:
                object.__setattr__(self, "penalty", Reciprocal())
        elif self.placement is not None or self.penalty is not None:
            raise ConfigurationError(f"{self.kind.value} takes no placement or penalty")

    @classmethod
    def all(cls):
        return cls(StrategyKind.ALL)

    @classmethod
    def any(cls):
        return cls(StrategyKind.ANY)

    @classmethod
    def mulsupcon(cls):
        return cls(StrategyKind.MULSUPCON)

    @classmethod
    def simdis(cls, placement=Placement.INSIDE_LOG, penalty=None):
        return cls(StrategyKind.SIMDIS, Placement(placement), penalty or Reciprocal())

    @property
    def name(self) -> str:
        """Short label, e.g. ``"ANY"`` or ``"SimDis-outside"``."""
        if self.kind is StrategyKind.SIMDIS:
            name = f"SimDis-{self.placement.value}"
            if not isinstance(self.penalty, Reciprocal):
                name += f"-exp{self.penalty.alpha:g}"
            return name
        return self.kind.value

    @classmethod
    def parse(cls, name: str, penalty: PenaltyKind | None = None) -> "Strategy":
        """Inverse of :attr:`name`; bare ``"SimDis"`` means the inside-log placement."""
        head, _, rest = name.partition("-")
        for kind in StrategyKind:
            if head.lower() == kind.value.lower():
                break
        else:
            raise ConfigurationError(f"unknown strategy {name!r}")
        if kind is not StrategyKind.SIMDIS:
            if rest:
                raise ConfigurationError(f"unknown strategy {name!r}")
            return cls(kind)
        parts = rest.split("-") if rest else []
        placement = Placement.INSIDE_LOG
        if parts:
            try:
                placement = Placement(parts.pop(0).lower())
            except ValueError:
                raise ConfigurationError(f"unknown SimDis placement in {name!r}") from None
        if parts:
            tail = parts.pop(0)
            if not tail.startswith("exp") or parts:
                raise ConfigurationError(f"unknown strategy {name!r}")
            penalty = penalty_from_dict({"kind": "exponential", "alpha": float(tail[3:])})
        return cls.simdis(placement, penalty)

    def to_dict(self) -> dict:
        d = {"name": self.kind.value}
        if self.kind is StrategyKind.SIMDIS:
            d["placement"] = self.placement.value
            d["penalty"] = self.penalty.to_dict()
        return d

    @classmethod
    def from_dict(cls, d) -> "Strategy":
        if isinstance(d, str):
            return cls.parse(d)
        s = cls.parse(d["name"])
        if s.kind is StrategyKind.SIMDIS:
            return cls.simdis(
                Placement(d.get("placement", "inside")), penalty_from_dict(d.get("penalty"))
            )
        return s


ALL_STRATEGIES = (
    Strategy.all(),
    Strategy.any(),
    Strategy.mulsupcon(),
    Strategy.simdis(Placement.INSIDE_LOG),
    Strategy.simdis(Placement.OUTSIDE_LOG),
    Strategy.simdis(Placement.TEMPERATURE_SCALED),
)


@dataclass
class LossReport:
    """Loss values for one batch.

    ``per_anchor`` has one entry per batch row; anchors listed in
    ``skipped_anchors`` had no positives and hold 0.
    """

    per_anchor: np.ndarray
    total: float
    gradient: np.ndarray
    skipped_anchors: tuple[int, ...] = field(default=())


def _overlaps(batch: ContrastiveBatch) -> np.ndarray:
    y = indicator_matrix(batch.labels)
    return y, y @ y.T


def positive_set(strategy: Strategy, batch: ContrastiveBatch, anchor: int) -> list[tuple[int, int]]:
    """Positives of ``anchor`` as ``(index, multiplicity)`` pairs in index order."""
    if not 0 <= anchor < len(batch):
        raise IndexError(f"anchor {anchor} out of range for batch of {len(batch)}")
    s = batch.labels[anchor]
    out = []
    for p, t in enumerate(batch.labels):
        if p == anchor:
            continue
        if strategy.kind is StrategyKind.ALL:
            if t == s:
                out.append((p, 1))
        else:
            k = s.overlap(t)
            if k:
                out.append((p, k if strategy.kind is StrategyKind.MULSUPCON else 1))
    return out


def _coefficients(batch: ContrastiveBatch, strategy: Strategy):
    """Return ``(M, C, rest, const, scale, has_pos)`` for the unified loss form.

    ``rest = C - sum_a M`` is kept separately (exactly zero unless the weights
    scale the logits) so the loss can be summed as ``M * (-log softmax)``
    without cancelling ``lse`` against the positive logits.
    """
    n = len(batch)
    y, overlap = _overlaps(batch)
    off = ~np.eye(n, dtype=bool)
    sizes = y.sum(axis=1)
    const = np.zeros(n)
    scale = 1.0

    if strategy.kind is StrategyKind.ALL:
        pos = (overlap == sizes[:, None]) & (overlap == sizes[None, :]) & off
    else:
        pos = (overlap > 0) & off
    npos = pos.sum(axis=1)
    has_pos = npos > 0
    inv = np.divide(1.0, npos, out=np.zeros(n), where=has_pos)

    if strategy.kind is StrategyKind.MULSUPCON:
        # per-label positive sets: member[i, p, l] = p != i and l in y_i and l in y_p
        member = (y[:, None, :] * y[None, :, :]).astype(bool) & off[:, :, None]
        per_label = member.sum(axis=1)  # |P_l(i)|
        inv_l = np.divide(1.0, per_label, out=np.zeros(per_label.shape), where=per_label > 0)
        M = (member * inv_l[:, None, :]).sum(axis=2)
        C = (per_label > 0).sum(axis=1).astype(np.float64)
        scale = 1.0 / sizes.sum()
        return M, C, np.zeros(n), const, scale, has_pos

    M = pos * inv[:, None]
    C = has_pos.astype(np.float64)
    rest = np.zeros(n)
    if strategy.kind is StrategyKind.SIMDIS:
        excess = sizes[None, :] - overlap
        w = np.where(pos, overlap / sizes[:, None] * strategy.penalty(excess), 0.0)
        if strategy.placement is Placement.INSIDE_LOG:
            logw = np.log(np.where(pos, w, 1.0))
            const = -(logw * M).sum(axis=1)
        elif strategy.placement is Placement.OUTSIDE_LOG:
            M = M * w
            C = M.sum(axis=1)
        else:
            M = M * w
            rest = C - M.sum(axis=1)
    return M, C, rest, const, scale, has_pos


def _log_softmax(batch: ContrastiveBatch):
    """Logits ``g``, row log-sum-exp, softmax and ``-log softmax`` (diagonal excluded).

    ``-log softmax`` is formed as ``(max - g) + log1p(others)``, where ``others``
    sums every exponential except the row maximum's, so near-saturated rows keep
    full relative precision.
    """
    z = batch.embeddings
    n = len(batch)
    g = (z @ z.T) / batch.temperature
    masked = np.where(np.eye(n, dtype=bool), -np.inf, g)
    top = masked.argmax(axis=1)
    rows = np.arange(n)
    row_max = masked[rows, top]
    e = np.exp(masked - row_max[:, None])
    e_rest = e.copy()
    e_rest[rows, top] = 0.0
    log_denom = np.log1p(e_rest.sum(axis=1))
    nlp = (row_max[:, None] - masked) + log_denom[:, None]
    return g, row_max + log_denom, e / e.sum(axis=1, keepdims=True), nlp


def evaluate(batch: ContrastiveBatch, strategy: Strategy, with_gradient: bool = True) -> LossReport:
    """Loss (and gradient) of ``batch`` under ``strategy``."""
    M, C, rest, const, scale, has_pos = _coefficients(batch, strategy)
    g, lse, soft, nlp = _log_softmax(batch)
    per_anchor = (M * np.where(M != 0, nlp, 0.0)).sum(axis=1) + rest * lse + const
    per_anchor = np.where(has_pos, per_anchor, 0.0)
    total = scale * float(per_anchor.sum())
    skipped = tuple(int(i) for i in np.flatnonzero(~has_pos))
    if with_gradient:
        dg = scale * (-M + C[:, None] * soft)
        grad = (dg + dg.T) @ batch.embeddings / batch.temperature
    else:
        grad = np.zeros_like(batch.embeddings)
    return LossReport(per_anchor, total, grad, skipped)


def loss_supcon(batch: ContrastiveBatch, strategy: Strategy | str = "ANY") -> LossReport:
    strategy = Strategy.parse(strategy) if isinstance(strategy, str) else strategy
    if strategy.kind not in (StrategyKind.ALL, StrategyKind.ANY):
        raise ConfigurationError("loss_supcon takes ALL or ANY")
    return evaluate(batch, strategy)


def loss_mulsupcon(batch: ContrastiveBatch) -> LossReport:
    return evaluate(batch, Strategy.mulsupcon())


def loss_simdis(
    batch: ContrastiveBatch,
    placement: Placement | str = Placement.INSIDE_LOG,
    penalty: PenaltyKind | None = None,
) -> LossReport:
    return evaluate(batch, Strategy.simdis(Placement(placement), penalty))


def gradient(batch: ContrastiveBatch, strategy: Strategy) -> np.ndarray:
    """``d total / d embeddings``, with respect to the rows exactly as given."""
    return evaluate(batch, strategy).gradient


def pair_terms(batch: ContrastiveBatch, strategy: Strategy) -> np.ndarray:
    """Each (anchor, positive) pair's additive contribution to the anchor loss.

    Zero off the positive set.  Before the batch-level scale, each row sums
    to that anchor's entry in ``per_anchor``.
    """
    M = _coefficients(batch, strategy)[0]
    g, lse, _, nlp = _log_softmax(batch)
    logp = np.where(M != 0, -nlp, 0.0)
    if strategy.kind is StrategyKind.SIMDIS and strategy.placement is Placement.INSIDE_LOG:
        w = positive_weights(batch, strategy.penalty)
        return np.where(M != 0, -M * (np.log(np.where(M != 0, w, 1.0)) + logp), 0.0)
    if strategy.kind is StrategyKind.SIMDIS and strategy.placement is Placement.TEMPERATURE_SCALED:
        w = positive_weights(batch, strategy.penalty)
        inv = np.divide(M, w, out=np.zeros_like(M), where=M != 0)
        return np.where(M != 0, -inv * (w * g - lse[:, None]), 0.0)
    return np.where(M != 0, -M * logp, 0.0)


def positive_weights(batch: ContrastiveBatch, penalty: PenaltyKind | None = None) -> np.ndarray:
    """SimDis weights on the ANY positive set, zero elsewhere."""
    penalty = Reciprocal() if penalty is None else penalty
    y, overlap = _overlaps(batch)
    sizes = y.sum(axis=1)
    pos = (overlap > 0) & ~np.eye(len(batch), dtype=bool)
    return np.where(pos, overlap / sizes[:, None] * penalty(sizes[None, :] - overlap), 0.0)


def batch_from_arrays(
    embeddings, labels: Sequence[Sequence[int]], temperature: float = 0.07, universe_size=None
) -> ContrastiveBatch:
    """Convenience constructor from plain lists of label indices."""
    size = universe_size or 1 + max(max(y) for y in labels)
    return ContrastiveBatch(
        np.asarray(embeddings, dtype=np.float64),
        tuple(LabelSet.of(y, size) for y in labels),
        temperature,
    )
